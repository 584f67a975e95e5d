"""
批量参数化装配模块

assemble_batched：一次单元循环装配全部参数（全局结构与局部缓存各分配一次，
循环内就地取值并按参数散布）；
assemble_naive_reference：对参数的朴素外层循环，每个参数重新积分并重新分配缓存
"""

from typing import Optional, Sequence, Union

import numpy as np

from assembly.param_arrays import BatchedSparseCSC, BatchedVector, SparsityPattern
from fem.kernels import WeakFormKernel, as_form, elemental_eval
from fem.mesh import FESpaceDef
from params.sampling import ParamBatch, Realization
from utils.errors import ArgumentError, AssemblyError, SparsityConsistencyError
from utils.logger import get_logger

logger = get_logger(__name__)

Kernels = Union[WeakFormKernel, Sequence[WeakFormKernel]]
Assembled = Union[BatchedSparseCSC, BatchedVector]


def _check_cells(cells: Optional[Sequence[int]], space: FESpaceDef) -> np.ndarray:
    if cells is None:
        return np.arange(space.mesh.n_cells)
    cells = np.asarray(cells, dtype=np.int64).ravel()
    if cells.size and (cells.min() < 0 or cells.max() >= space.mesh.n_cells):
        raise AssemblyError(f'单元子集越界: 单元数为 {space.mesh.n_cells}')
    return cells


def _is_matrix(form, is_matrix: Optional[bool]) -> bool:
    if is_matrix is None:
        return all(k.kind != 'load' for k in form)
    return is_matrix


def assemble_batched(
    kernels: Kernels,
    params: Union[Realization, ParamBatch],
    space: FESpaceDef,
    cells: Optional[Sequence[int]] = None,
    times: Optional[Sequence[float]] = None,
    state: Optional[np.ndarray] = None,
    rate: Optional[np.ndarray] = None,
    is_matrix: Optional[bool] = None,
    out: Optional[Assembled] = None
) -> Assembled:
    """
    批量装配残差向量或 Jacobian 矩阵

    Args:
        kernels: 弱形式核（序列中各项相加）
        params: Realization 或 ParamBatch
        space: 有限元空间（装配到自由行/自由列）
        cells: 可选单元子集；只有这些单元触及的元素被定义，其余为零
        times: 可选时间值子集（仅 Realization 输入时使用）
        state: 全局自由度状态 (n_dofs, P)
        rate: 时间导数状态 (n_dofs, P)
        is_matrix: 强制矩阵/向量形式
        out: 预分配的输出结构（基准测试的“不含全局分配”口径）

    Returns:
        BatchedSparseCSC 或 BatchedVector
    """
    form = as_form(kernels)
    matrix = _is_matrix(form, is_matrix)
    batch = params.batch(times) if isinstance(params, Realization) else params
    P = len(batch)
    cell_ids = _check_cells(cells, space)

    # 1. 全局结构只分配一次
    if matrix:
        pattern = SparsityPattern.for_space(space)
        result = out if out is not None else BatchedSparseCSC.zeros(pattern, P)
        target = result.data
        slot_table = pattern.cell_slots
    else:
        result = out if out is not None else BatchedVector.zeros(space.n_free, P)
        target = result.values
        free_table = space.dof_to_free[space.cell_dofs]
    if out is not None:
        target.fill(0.0)

    logger.debug('装配 %s: %d 个单元 x %d 个参数', 'Jacobian' if matrix else '残差', cell_ids.size, P)

    # 2. 局部缓存只分配一次
    cell_array = elemental_eval(form, batch, space, is_matrix=matrix, state=state, rate=rate)

    # 3. 单元循环：就地取值，按参数散布
    for k in cell_ids:
        blk = cell_array[k].data
        if matrix:
            slots = slot_table[k]
            mask = slots >= 0
            target[:, slots[mask]] += blk[:, mask]
        else:
            rows = free_table[k]
            mask = rows >= 0
            target[rows[mask], :] += blk[:, mask].T
    return result


def assemble_naive_reference(
    kernels: Kernels,
    params: Union[Realization, ParamBatch],
    space: FESpaceDef,
    times: Optional[Sequence[float]] = None,
    state: Optional[np.ndarray] = None,
    rate: Optional[np.ndarray] = None,
    is_matrix: Optional[bool] = None,
    out: Optional[Assembled] = None
) -> Assembled:
    """
    朴素参考装配：对参数做外层循环，每个参数重新积分、重新分配缓存与全局结构

    与 assemble_batched 结果一致，仅用于正确性对照与基准测试
    """
    form = as_form(kernels)
    matrix = _is_matrix(form, is_matrix)
    batch = params.batch(times) if isinstance(params, Realization) else params
    P = len(batch)
    if matrix:
        pattern = SparsityPattern.for_space(space)
        result = out if out is not None else BatchedSparseCSC.zeros(pattern, P)
    else:
        result = out if out is not None else BatchedVector.zeros(space.n_free, P)

    for j in range(P):
        mus = batch.mus[j:j + 1]
        ts = None if batch.ts is None else batch.ts[j:j + 1]
        single = ParamBatch(mus, ts)
        st = None if state is None else np.ascontiguousarray(state[:, j:j + 1])
        rt = None if rate is None else np.ascontiguousarray(rate[:, j:j + 1])
        part = assemble_batched(form, single, space, state=st, rate=rt, is_matrix=matrix)
        if matrix:
            result.data[j] = part.data[0]
        else:
            result.values[:, j] = part.values[:, 0]
    return result


def check_same_pattern(structures: Sequence[BatchedSparseCSC]) -> SparsityPattern:
    """检查一组 Jacobian 快照共享同一稀疏模式"""
    if not structures:
        raise ArgumentError('至少需要一个 Jacobian 快照')
    pattern = structures[0].pattern
    for s in structures[1:]:
        if s.pattern is not pattern and not s.pattern.same_as(pattern):
            raise SparsityConsistencyError('Jacobian 快照的稀疏模式不一致')
    return pattern
