"""
评估模块

error_measure：全阶与降阶解的平均相对误差（X 范数，瞬态按时间步的左矩形规则积分）；
eval_performance：重构降阶解并计算误差与在线加速比，生成 PerfReport（JSON + CSV）。
不在 utils/__init__ 中导入（依赖 rom 包）
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd

from params.sampling import Realization
from rom.operator import ReducedOperator, inner_product_matrix
from rom.reduction import NormMatrix
from rom.solver import reconstruct
from snapshots.tensor import SnapshotTensor
from utils.errors import ArgumentError, DegenerateInputError, ShapeError
from utils.logger import get_logger
from utils.stats import RunStats

logger = get_logger(__name__)

REPORT_JSON = 'report.json'
REPORT_CSV = 'report.csv'


def _norms(X: NormMatrix, V: np.ndarray) -> np.ndarray:
    """各列的 X 范数 sqrt(v^T X v)"""
    XV = V if X is None else X @ V
    return np.sqrt(np.maximum(np.einsum('ij,ij->j', V, XV), 0.0))


def relative_errors(fom: SnapshotTensor, rom: SnapshotTensor, X: NormMatrix = None) -> np.ndarray:
    """
    每个参数的相对误差

    稳态: ||u_h - u_n||_X / ||u_h||_X；
    瞬态: (1/T) sum_n dt ||e(t_n)||_X / ||u_h(t_n)||_X，即逐步比值的平均

    Raises:
        ShapeError: 形状或轴标签不一致
        DegenerateInputError: 全阶解某一列范数为零
    """
    if fom.dims != rom.dims or fom.axes != rom.axes:
        raise ShapeError(f'全阶 {fom.dims}{fom.axes} 与降阶 {rom.dims}{rom.axes} 不一致')
    fom.require_axes((('space',),) + tuple((a,) for a in fom.axes[1:]))
    n = fom.dims[0]
    F = fom.data.reshape(n, -1, order='F')
    R = rom.data.reshape(n, -1, order='F')
    reference = _norms(X, F)
    if np.any(reference == 0.0):
        raise DegenerateInputError('全阶解的范数为零，无法计算相对误差')
    ratios = _norms(X, F - R) / reference
    if fom.is_transient:
        return ratios.reshape(fom.nsteps, fom.nparams, order='F').mean(axis=0)
    return ratios


def error_measure(fom: SnapshotTensor, rom: SnapshotTensor, X: NormMatrix = None) -> float:
    """
    参数上平均的相对误差

    Example:
        >>> error_measure(fom, fom, X)
        0.0
    """
    return float(relative_errors(fom, rom, X).mean())


@dataclass
class PerfReport:
    """
    性能报告

    Attributes:
        error: 平均相对误差
        speedup_time: 在线墙钟时间加速比（全阶平均 / 降阶平均）
        speedup_memory: 在线内存加速比
        per_param_errors: 每个参数的相对误差
        config: 配置回显
        offline_wall_ns: 离线构造耗时（仅供参考，不计入加速比）
        reduced_dims: 约化维数
    """

    error: float
    speedup_time: float
    speedup_memory: float
    per_param_errors: List[float] = field(default_factory=list)
    config: Dict[str, Any] = field(default_factory=dict)
    offline_wall_ns: int = 0
    reduced_dims: Dict[str, int] = field(default_factory=dict)
    fom_stats: Optional[RunStats] = None
    rom_stats: Optional[RunStats] = None

    def __post_init__(self) -> None:
        if self.error < 0 or any(e < 0 for e in self.per_param_errors):
            raise ArgumentError('误差必须非负')
        if not (self.speedup_time > 0 and self.speedup_memory > 0):
            raise ArgumentError('加速比必须为正')

    def to_dict(self) -> Dict[str, Any]:
        data = {
            'error': float(self.error),
            'speedup_time': float(self.speedup_time),
            'speedup_memory': float(self.speedup_memory),
            'per_param_errors': [float(e) for e in self.per_param_errors],
            'config': self.config,
            'offline_wall_ns': int(self.offline_wall_ns),
            'reduced_dims': self.reduced_dims,
        }
        if self.fom_stats is not None:
            data['fom_stats'] = self.fom_stats.to_dict()
        if self.rom_stats is not None:
            data['rom_stats'] = self.rom_stats.to_dict()
        return data

    def to_frame(self) -> pd.DataFrame:
        """CSV 镜像：每个参数一行，标量字段逐行重复"""
        df = pd.DataFrame({
            'param_index': np.arange(len(self.per_param_errors)),
            'error': self.per_param_errors,
        })
        df['error_mean'] = self.error
        df['speedup_time'] = self.speedup_time
        df['speedup_memory'] = self.speedup_memory
        return df

    def save(self, directory: Union[str, Path]) -> Path:
        """写入 report.json 与 report.csv，返回 JSON 路径"""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        json_path = directory / REPORT_JSON
        with open(json_path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2, ensure_ascii=False)
        self.to_frame().to_csv(directory / REPORT_CSV, index=False)
        return json_path


def eval_performance(
    rbop: ReducedOperator,
    realization: Realization,
    fom_snaps: SnapshotTensor,
    fom_stats: Optional[RunStats],
    coords: np.ndarray,
    rom_stats: Optional[RunStats],
    X: NormMatrix = None
) -> PerfReport:
    """
    评估降阶模型的精度与在线加速比

    Args:
        rbop: 约化算子
        realization: 在线参数（全阶与降阶在同一组参数上执行）
        fom_snaps / fom_stats: 全阶解与代价
        coords / rom_stats: 降阶坐标与代价
        X: 误差范数矩阵，默认按算子的内积类型装配

    Returns:
        PerfReport

    Raises:
        ArgumentError: 缺少统计信息
    """
    if fom_stats is None or rom_stats is None:
        raise ArgumentError('eval_performance 需要全阶与降阶的 RunStats')
    if X is None:
        X = inner_product_matrix(rbop.problem.space, rbop.inner_product)
    rom_snaps, _ = reconstruct(rbop, coords, realization)
    errors = relative_errors(fom_snaps, rom_snaps, X)
    # 纳秒/字节计数下限取 1，避免除零
    speedup_time = fom_stats.mean_wall_ns / max(rom_stats.mean_wall_ns, 1.0)
    speedup_memory = max(fom_stats.mean_alloc_bytes, 1.0) / max(rom_stats.mean_alloc_bytes, 1.0)
    report = PerfReport(
        error=float(errors.mean()),
        speedup_time=max(speedup_time, np.finfo(float).tiny),
        speedup_memory=speedup_memory,
        per_param_errors=errors.tolist(),
        config=dict(rbop.config),
        offline_wall_ns=int(rbop.offline_wall_ns),
        reduced_dims={'n': rbop.n, 'n1': rbop.n1, 'n2': rbop.n2},
        fom_stats=fom_stats,
        rom_stats=rom_stats,
    )
    logger.info('误差 %.3e，时间加速比 %.2f，内存加速比 %.2f', report.error, report.speedup_time,
                report.speedup_memory)
    return report
