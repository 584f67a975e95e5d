"""
快照文件读写模块

RBSN 二进制格式（全部小端）:
    magic 'RBSN' | u32 version=1 | u8 轴数 | 每轴 (u8 标签码, u64 长度)
    | u32 策略码 | u64 seed | u8 参数维数 p | 2p 个 f64 边界 | f64 数据（规范顺序）

实现回显中 seed 与边界之间多出一个 u8 p：边界长度无法从其余字段推出，
算子文件把多个张量首尾相接存放时也要靠它定位下一段。读取方必须按此布局解析。
"""

import struct
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

from snapshots.tensor import AXIS_LABELS, RealizationEcho, SnapshotTensor
from utils.errors import CorruptionError, FormatError

MAGIC = b'RBSN'
VERSION = 1
STRATEGY_CODES = {
    'uniform': 0,
    'halton': 1,
    'latin_hypercube': 2,
    'normal': 3,
    'tensorial_uniform': 4,
    None: 255,
}
_STRATEGY_NAMES = {code: name for name, code in STRATEGY_CODES.items()}
_AXIS_CODES = {label: code for code, label in enumerate(AXIS_LABELS)}


def encode_tensor(tensor: SnapshotTensor) -> bytes:
    """把张量编码为 RBSN 字节串（算子文件的分段也使用此编码）"""
    header = [MAGIC, struct.pack('<IB', VERSION, len(tensor.axes))]
    for label, extent in zip(tensor.axes, tensor.dims):
        header.append(struct.pack('<BQ', _AXIS_CODES[label], extent))
    echo = tensor.echo
    bounds = np.zeros((0, 2)) if echo.bounds is None else np.asarray(echo.bounds, dtype='<f8')
    header.append(struct.pack('<IQB', STRATEGY_CODES.get(echo.strategy, 255), echo.seed, bounds.shape[0]))
    header.append(bounds.astype('<f8').tobytes(order='C'))
    payload = np.asarray(tensor.data, dtype='<f8').tobytes(order='F')
    return b''.join(header) + payload


def _read(stream: BinaryIO, size: int, what: str) -> bytes:
    data = stream.read(size)
    if len(data) != size:
        raise CorruptionError(f'RBSN 数据被截断: 读取 {what} 时需要 {size} 字节，仅有 {len(data)}')
    return data


def decode_tensor(stream: BinaryIO) -> SnapshotTensor:
    """
    从字节流解码一个张量

    Raises:
        FormatError: 魔数或版本不匹配
        CorruptionError: 数据截断或标签码非法
    """
    magic = stream.read(4)
    if magic != MAGIC:
        raise FormatError(f'不是 RBSN 文件: magic={magic!r}')
    version, naxes = struct.unpack('<IB', _read(stream, 5, 'header'))
    if version != VERSION:
        raise FormatError(f'不支持的 RBSN 版本: {version}')
    axes, dims = [], []
    for _ in range(naxes):
        code, extent = struct.unpack('<BQ', _read(stream, 9, 'axis'))
        if code >= len(AXIS_LABELS):
            raise CorruptionError(f'非法轴标签码: {code}')
        axes.append(AXIS_LABELS[code])
        dims.append(extent)
    strategy_code, seed, p = struct.unpack('<IQB', _read(stream, 13, 'realization'))
    if strategy_code not in _STRATEGY_NAMES:
        raise CorruptionError(f'非法策略码: {strategy_code}')
    bounds = None
    if p > 0:
        bounds = np.frombuffer(_read(stream, 16 * p, 'bounds'), dtype='<f8').reshape(p, 2).astype(float)
    count = int(np.prod(dims)) if dims else 1
    payload = np.frombuffer(_read(stream, 8 * count, 'payload'), dtype='<f8').astype(float)
    echo = RealizationEcho(int(seed), _STRATEGY_NAMES[strategy_code], bounds)
    return SnapshotTensor(payload.reshape(dims, order='F'), axes, echo)


def save_snapshots(tensor: SnapshotTensor, path: Union[str, Path]) -> None:
    """保存张量到 RBSN 文件"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(encode_tensor(tensor))


def load_snapshots(path: Union[str, Path]) -> SnapshotTensor:
    """
    从 RBSN 文件加载张量

    Raises:
        FileNotFoundError: 文件不存在
        FormatError / CorruptionError: 见 decode_tensor
    """
    with open(Path(path), 'rb') as f:
        tensor = decode_tensor(f)
        if f.read(1):
            raise CorruptionError(f'RBSN 文件末尾有多余数据: {path}')
    return tensor
