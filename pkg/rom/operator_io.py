"""
约化算子文件读写模块

RBOP 格式（全部小端）:
    magic 'RBOP' | u32 version=1 | u64 清单长度 | JSON 清单（维数、容差、问题回显、分段表）
    | 各分段依次以 RBSN 编码存放（一维 'reduced' 轴，真实形状与类型记录在清单中）

范数矩阵 X 不写入文件，加载时按清单中的内积类型重新装配
"""

import hashlib
import io
import json
import struct
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from fem.problems import ProblemDef
from rom.hyper_reduction import HyperReduction, ReducedIntegrationDomain
from rom.operator import RBSpace, ReducedOperator, inner_product_matrix
from rom.reduction import Projection, TransientProjection
from snapshots.io import decode_tensor, encode_tensor
from snapshots.tensor import SnapshotTensor
from utils.errors import CompatibilityError, CorruptionError, FormatError, OperatorNotFoundError, ROMError
from utils.logger import get_logger

logger = get_logger(__name__)

MAGIC = b'RBOP'
VERSION = 1
OPERATOR_FILE = 'operator.rbop'

_DOMAIN_FIELDS = ('cells', 'dofs', 'local_rows', 'gather', 'basis_rows', 'dirichlet_mask', 'slot_pos', 'step_pos',
                  'steps')
_HR_FIELDS = ('basis', 'indices', 'slots', 'interp', 'cores', 'temporal_basis', 'steps', 'weights')


def _projection_sections(prefix: str, proj) -> Dict[str, np.ndarray]:
    parts = [('spatial', proj.spatial), ('temporal', proj.temporal)] if isinstance(proj, TransientProjection) \
        else [('spatial', proj)]
    out = {}
    for name, p in parts:
        out[f'{prefix}.{name}.basis'] = p.basis
        if p.singular_values is not None:
            out[f'{prefix}.{name}.singular_values'] = p.singular_values
    return out


def _hr_sections(prefix: str, hr: HyperReduction) -> Dict[str, np.ndarray]:
    out = {}
    for name in _HR_FIELDS:
        value = getattr(hr, name)
        if value is not None:
            out[f'{prefix}.{name}'] = value
    for name in _DOMAIN_FIELDS:
        value = getattr(hr.domain, name)
        if value is not None:
            out[f'{prefix}.domain.{name}'] = value
    return out


def operator_sections(rbop: ReducedOperator) -> Dict[str, np.ndarray]:
    """约化算子的全部数组分段（有序）"""
    sections = _projection_sections('trial', rbop.trial.projection)
    if rbop.petrov_galerkin:
        sections['test.spatial.basis'] = rbop.test.basis
    sections.update(_hr_sections('residual', rbop.residual))
    sections.update(_hr_sections('jacobian', rbop.jacobian))
    for name in ('mass', 'temporal_mass', 'temporal_shift'):
        value = getattr(rbop, name)
        if value is not None:
            sections[name] = value
    return sections


def _layout(value) -> str:
    array = np.asarray(value)
    return 'F' if array.ndim > 1 and array.flags.f_contiguous and not array.flags.c_contiguous else 'C'


def _manifest(rbop: ReducedOperator, sections: Dict[str, np.ndarray]) -> Dict[str, Any]:
    return {
        'format': 'RBOP',
        'version': VERSION,
        'echo': rbop.echo(),
        'config': rbop.config,
        'dims': {'N': rbop.trial.fe_space.n_free, 'n': rbop.n, 'n1': rbop.n1, 'n2': rbop.n2},
        'transient': rbop.transient,
        'petrov_galerkin': rbop.petrov_galerkin,
        'offline_wall_ns': int(rbop.offline_wall_ns),
        'hyper_reductions': {
            'residual': {'kind': rbop.residual.kind, 'structure': rbop.residual.structure},
            'jacobian': {'kind': rbop.jacobian.kind, 'structure': rbop.jacobian.structure},
        },
        'sections': [
            {'name': name, 'shape': list(np.shape(value)), 'dtype': np.asarray(value).dtype.name,
             'order': _layout(value)}
            for name, value in sections.items()
        ],
    }


def save_operator(rbop: ReducedOperator, path: Union[str, Path]) -> Path:
    """
    保存约化算子

    Args:
        rbop: 约化算子
        path: 文件路径；若为目录则写入其中的 operator.rbop

    Returns:
        实际写入的文件路径
    """
    path = Path(path)
    if path.is_dir() or not path.suffix:
        path = path / OPERATOR_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_operator(rbop))
    logger.info('约化算子已保存: %s', path)
    return path


def _read_header(stream) -> Dict[str, Any]:
    magic = stream.read(4)
    if magic != MAGIC:
        raise FormatError(f'不是 RBOP 文件: magic={magic!r}')
    head = stream.read(12)
    if len(head) != 12:
        raise CorruptionError('RBOP 头部被截断')
    version, length = struct.unpack('<IQ', head)
    if version != VERSION:
        raise FormatError(f'不支持的 RBOP 版本: {version}')
    raw = stream.read(length)
    if len(raw) != length:
        raise CorruptionError('RBOP 清单被截断')
    try:
        return json.loads(raw.decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptionError(f'RBOP 清单不是合法 JSON: {exc}') from exc


def _read_sections(stream, table: List[Dict[str, Any]]) -> Dict[str, np.ndarray]:
    sections = {}
    for entry in table:
        tensor = decode_tensor(stream)
        shape = tuple(int(s) for s in entry['shape'])
        if tensor.data.size != int(np.prod(shape)):
            raise CorruptionError(f'分段 {entry["name"]} 长度与清单不符')
        value = tensor.data.reshape(shape, order='F').astype(entry['dtype'])
        # 恢复原内存布局，使在线求解逐位一致
        sections[entry['name']] = np.asarray(value, order=entry.get('order', 'C'))
    if stream.read(1):
        raise CorruptionError('RBOP 文件末尾有多余数据')
    return sections


def _projection(sections: Dict[str, np.ndarray], prefix: str, name: str, X, tol: float) -> Projection:
    return Projection(sections[f'{prefix}.{name}.basis'], X, sections.get(f'{prefix}.{name}.singular_values'), tol)


def _domain(sections: Dict[str, np.ndarray], prefix: str) -> ReducedIntegrationDomain:
    values = {name: sections.get(f'{prefix}.domain.{name}') for name in _DOMAIN_FIELDS}
    return ReducedIntegrationDomain(**values)


def _hyper_reduction(sections: Dict[str, np.ndarray], prefix: str, meta: Dict[str, str]) -> HyperReduction:
    values = {name: sections.get(f'{prefix}.{name}') for name in _HR_FIELDS}
    return HyperReduction(kind=meta['kind'], structure=meta['structure'], domain=_domain(sections, prefix), **values)


def check_compatible(stored: Dict[str, Any], problem: ProblemDef, tol: Optional[float] = None) -> None:
    """
    检查算子回显与问题一致

    Raises:
        CompatibilityError: 问题回显（网格、参数盒、形式、时间网格）或容差不一致
    """
    expected = json.loads(json.dumps(problem.echo()))
    if stored['problem'] != expected:
        diff = sorted(k for k in set(expected) | set(stored['problem'])
                      if expected.get(k) != stored['problem'].get(k))
        raise CompatibilityError(f'算子与问题不兼容，差异字段: {diff}')
    if tol is not None and float(stored['tol']) != float(tol):
        raise CompatibilityError(f'算子容差 {stored["tol"]} 与请求的 {tol} 不一致')


def read_manifest(path: Union[str, Path]) -> Dict[str, Any]:
    """只读取清单（不解码分段）"""
    path = _resolve(path)
    with open(path, 'rb') as f:
        return _read_header(f)


def _resolve(path: Union[str, Path]) -> Path:
    path = Path(path)
    if path.is_dir():
        path = path / OPERATOR_FILE
    if not path.exists():
        raise OperatorNotFoundError(f'约化算子文件不存在: {path}')
    return path


def load_operator(path: Union[str, Path], problem: ProblemDef, tol: Optional[float] = None) -> ReducedOperator:
    """
    加载约化算子

    Args:
        path: 文件或包含 operator.rbop 的目录
        problem: 当前问题定义（用于兼容性检查与重建 X）
        tol: 可选，要求的容差

    Returns:
        ReducedOperator（与保存前逐位一致）

    Raises:
        OperatorNotFoundError: 文件不存在（调用方可退回离线构造）
        FormatError: 魔数或版本不匹配
        CorruptionError: 数据截断或清单损坏
        CompatibilityError: 与当前问题不兼容

    Example:
        >>> try:
        ...     rbop = load_operator('results/heat2d', problem)
        ... except OperatorNotFoundError:
        ...     rbop = build_reduced_operator(problem, config)
    """
    path = _resolve(path)
    with open(path, 'rb') as f:
        manifest = _read_header(f)
        try:
            check_compatible(manifest['echo'], problem, tol)
            sections = _read_sections(f, manifest['sections'])
        except KeyError as exc:
            raise CorruptionError(f'RBOP 清单缺少字段: {exc}') from exc

    try:
        echo = manifest['echo']
        space = problem.space
        X = inner_product_matrix(space, echo['inner_product'])
        tol_value = float(echo['tol'])
        spatial = _projection(sections, 'trial', 'spatial', X, tol_value)
        if manifest['transient']:
            temporal = _projection(sections, 'trial', 'temporal', None, tol_value)
            trial = RBSpace(space, TransientProjection(spatial, temporal))
        else:
            trial = RBSpace(space, spatial)
        test = trial
        if manifest['petrov_galerkin']:
            test_spatial = Projection(sections['test.spatial.basis'], None)
            test_proj = TransientProjection(test_spatial, trial.projection.temporal) if manifest['transient'] \
                else test_spatial
            test = RBSpace(space, test_proj)
        meta = manifest['hyper_reductions']
        rbop = ReducedOperator(
            problem=problem,
            trial=trial,
            test=test,
            jacobian=_hyper_reduction(sections, 'jacobian', meta['jacobian']),
            residual=_hyper_reduction(sections, 'residual', meta['residual']),
            inner_product=echo['inner_product'],
            config=manifest['config'],
            mass=sections.get('mass'),
            temporal_mass=sections.get('temporal_mass'),
            temporal_shift=sections.get('temporal_shift'),
            offline_wall_ns=int(manifest['offline_wall_ns']),
        )
    except KeyError as exc:
        raise CorruptionError(f'RBOP 缺少分段或字段: {exc}') from exc
    except ROMError:
        raise
    except (TypeError, ValueError) as exc:
        raise CorruptionError(f'RBOP 内容无法重建约化算子: {exc}') from exc
    logger.info('约化算子已加载: %s', path)
    return rbop


def encode_operator(rbop: ReducedOperator) -> bytes:
    """约化算子的 RBOP 字节串"""
    buffer = io.BytesIO()
    sections = operator_sections(rbop)
    manifest = json.dumps(_manifest(rbop, sections), sort_keys=True).encode('utf-8')
    buffer.write(MAGIC + struct.pack('<IQ', VERSION, len(manifest)) + manifest)
    for value in sections.values():
        buffer.write(encode_tensor(SnapshotTensor(np.asarray(value, dtype=float).ravel(order='F'), ('reduced',))))
    return buffer.getvalue()


def operator_checksum(path: Union[str, Path]) -> Tuple[int, str]:
    """文件大小与 sha256，用于检查 eval 不修改算子文件"""
    path = _resolve(path)
    data = path.read_bytes()
    return len(data), hashlib.sha256(data).hexdigest()
