"""
快照采集模块

collect_snapshots：全阶解快照；
residual_snapshots / jacobian_snapshots：超降阶所需的残差向量与 Jacobian 非零值快照。
稳态问题在全阶 Newton 的每个迭代点采样（线性问题即零自由状态一点），
瞬态线性问题在零自由状态（只含 Dirichlet 提升）下对全部 (mu, t_n) 一次性批量装配
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np

from assembly.assembler import assemble_batched, check_same_pattern
from assembly.param_arrays import BatchedSparseCSC, SparsityPattern
from fem.problems import ProblemDef
from fem.solver import fom_solve_steady, fom_solve_transient, interpolate_dirichlet
from params.sampling import Realization
from snapshots.tensor import RealizationEcho, SnapshotTensor
from utils.errors import ArgumentError
from utils.logger import get_logger
from utils.stats import RunStats

logger = get_logger(__name__)


def collect_snapshots(
    problem: ProblemDef,
    realization: Realization,
    theta: float = 1.0,
    eps: float = 1e-10,
    max_iter: int = 20
) -> Tuple[SnapshotTensor, RunStats]:
    """
    采集全阶解快照

    Args:
        problem: 问题定义
        realization: 从问题参数空间采样的 Realization
        theta: 瞬态问题的 theta
        eps, max_iter: Newton 停止准则

    Returns:
        稳态 (N, N_mu) 或瞬态 (N, N_t, N_mu) 的张量，以及全阶 RunStats

    Raises:
        求解器异常，param_index 标注出错参数
    """
    if problem.transient:
        return fom_solve_transient(problem, realization, theta, eps, max_iter)
    solution, run_stats = fom_solve_steady(problem, realization, eps, max_iter)
    tensor = SnapshotTensor(solution.values, ('space', 'param'), RealizationEcho.of(realization))
    return tensor, run_stats


def _transient_states(problem: ProblemDef, realization: Realization):
    """零自由状态下全部 (mu, t_n) 的提升状态与提升速率，批次时间最快"""
    space = problem.space
    g_now = interpolate_dirichlet(problem.dirichlet, realization, space, times=realization.steps)
    g_before = interpolate_dirichlet(problem.dirichlet, realization, space, times=realization.times[:-1])
    zeros = np.zeros((space.n_free, g_now.shape[1]))
    state = space.lift(zeros, g_now)
    rate = space.lift(zeros, (g_now - g_before) / realization.dt)
    return state, rate


def stack_nonzeros(structures: Sequence[BatchedSparseCSC],
                   echo: Optional[RealizationEcho] = None) -> Tuple[SnapshotTensor, SparsityPattern]:
    """
    水平拼接 Jacobian 快照的非零值向量

    Raises:
        SparsityConsistencyError: 稀疏模式不一致
    """
    pattern = check_same_pattern(structures)
    values = np.hstack([s.values for s in structures])
    return SnapshotTensor(values, ('space_nnz', 'param'), echo), pattern


def _steady_iterates(problem: ProblemDef, realization: Realization, eps: float, max_iter: int):
    residuals: List[np.ndarray] = []
    jacobians: List[BatchedSparseCSC] = []

    def record(active, state, r, J) -> None:
        residuals.append(r.values.copy())
        jacobians.append(BatchedSparseCSC(J.pattern, J.data.copy()))

    fom_solve_steady(problem, realization, eps, max_iter, on_iterate=record)
    return np.hstack(residuals), jacobians


def residual_snapshots(
    problem: ProblemDef,
    realization: Realization,
    eps: float = 1e-10,
    max_iter: int = 20
) -> SnapshotTensor:
    """
    残差快照（含 Dirichlet 提升）

    Returns:
        稳态 (N, S)，S 为全部参数的 Newton 迭代点总数；瞬态 (N, N_t, N_mu)
    """
    echo = RealizationEcho.of(realization)
    if not problem.transient:
        values, _ = _steady_iterates(problem, realization, eps, max_iter)
        return SnapshotTensor(values, ('space', 'param'), echo)
    if not problem.linear:
        raise ArgumentError('瞬态超降阶只支持线性问题')
    state, rate = _transient_states(problem, realization)
    r = assemble_batched(problem.residual_form(), realization, problem.space, cells=problem.residual_cells,
                         state=state, rate=rate, is_matrix=False)
    n, nt, npar = problem.space.n_free, realization.nsteps, realization.nparams
    logger.info('残差快照: %d x %d x %d', n, nt, npar)
    return SnapshotTensor(r.values.reshape(n, nt, npar, order='F'), ('space', 'time', 'param'), echo)


def jacobian_snapshots(
    problem: ProblemDef,
    realization: Realization,
    eps: float = 1e-10,
    max_iter: int = 20
) -> Tuple[SnapshotTensor, SparsityPattern]:
    """
    Jacobian 非零值快照（所有快照共享同一稀疏模式）

    Returns:
        (稳态 (N_z, S) 或瞬态 (N_z, N_t, N_mu) 的张量, 稀疏模式)
    """
    echo = RealizationEcho.of(realization)
    pattern = SparsityPattern.for_space(problem.space)
    if not problem.transient:
        _, structures = _steady_iterates(problem, realization, eps, max_iter)
        return stack_nonzeros(structures, echo)
    if not problem.linear:
        raise ArgumentError('瞬态超降阶只支持线性问题')
    state, _ = _transient_states(problem, realization)
    J = assemble_batched(problem.jacobian_form(), realization, problem.space, cells=problem.jacobian_cells,
                         state=state, is_matrix=True)
    nt, npar = realization.nsteps, realization.nparams
    logger.info('Jacobian 快照: nnz=%d x %d x %d', pattern.nnz, nt, npar)
    return SnapshotTensor(J.values.reshape(pattern.nnz, nt, npar, order='F'),
                          ('space_nnz', 'time', 'param'), echo), pattern
