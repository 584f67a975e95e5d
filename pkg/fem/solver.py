"""
全阶求解器模块

interpolate_dirichlet：Dirichlet 数据的节点插值；
fom_solve_steady：批量 Newton-Raphson（线性问题一步收敛）；
fom_solve_transient：theta 方法时间推进（theta=1 即向后 Euler），每步内做 Newton
"""

from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from assembly.assembler import assemble_batched
from assembly.param_arrays import BatchedSparseCSC, BatchedVector
from fem.kernels import ParamFunction
from fem.mesh import FESpaceDef
from fem.problems import ProblemDef
from params.sampling import ParamBatch, Realization
from snapshots.tensor import RealizationEcho, SnapshotTensor
from utils import stats
from utils.errors import (
    ArgumentError,
    ConvergenceError,
    EvaluationError,
    LinearSolveError,
    ROMError,
)
from utils.logger import get_logger
from utils.stats import RunStats, measure

logger = get_logger(__name__)

# on_iterate(active, state, residual, jacobian)：每次 Newton 装配后回调，用于采集残差/Jacobian 快照
IterateCallback = Callable[[np.ndarray, np.ndarray, BatchedVector, BatchedSparseCSC], None]


def _as_batch(params: Union[Realization, ParamBatch], times: Optional[Sequence[float]] = None) -> ParamBatch:
    return params.batch(times) if isinstance(params, Realization) else params


def nodal_values(fun: ParamFunction, params: Union[Realization, ParamBatch], space: FESpaceDef,
                 dofs: np.ndarray, times: Optional[Sequence[float]] = None) -> np.ndarray:
    """在给定自由度的顶点上对 P 个参数求值，返回 (len(dofs), P)"""
    batch = _as_batch(params, times)
    P = len(batch)
    out = stats.zeros((dofs.size, P), order='F')
    if dofs.size == 0:
        return out
    x = space.mesh.coords[dofs]
    for j in range(P):
        mu, t = batch[j]
        try:
            out[:, j] = fun.evaluate(mu, t, x)
        except Exception as exc:
            raise EvaluationError(f'{fun.name or "函数"} 节点求值失败: {exc}', cell=-1, param=j) from exc
    return out


def interpolate_dirichlet(
    g: ParamFunction,
    params: Union[Realization, ParamBatch],
    space: FESpaceDef,
    times: Optional[Sequence[float]] = None
) -> np.ndarray:
    """
    Dirichlet 数据的节点插值

    Args:
        g: Dirichlet 数据 g(mu[, t], x)
        params: Realization 或 ParamBatch
        space: 有限元空间
        times: 瞬态 Realization 的求值时间（默认全部时间步）

    Returns:
        (n_dirichlet, P)，Dirichlet 自由度为空时返回空批次

    Example:
        >>> gD = interpolate_dirichlet(problem.dirichlet, realization, space, times=[0.0])
    """
    return nodal_values(g, params, space, space.dirichlet_dofs, times)


def lu_solve(matrix: sp.spmatrix, rhs: np.ndarray, param: Optional[int] = None) -> np.ndarray:
    """
    稀疏 LU 求解

    Raises:
        LinearSolveError: 矩阵奇异
    """
    n = matrix.shape[0]
    if n == 0:
        return stats.zeros(0)
    try:
        lu = splu(sp.csc_matrix(matrix))
    except RuntimeError as exc:
        raise LinearSolveError(f'Jacobian 奇异: {exc}', param_index=param) from exc
    # 因子规模按 (值 + 行号) 估计
    stats.record((lu.L.nnz + lu.U.nnz) * 12)
    x = stats.track(lu.solve(np.asarray(rhs, dtype=float)))
    if not np.all(np.isfinite(x)):
        raise LinearSolveError('线性求解得到非有限值', param_index=param)
    return x


def newton_batch(
    problem: ProblemDef,
    batch: ParamBatch,
    w: np.ndarray,
    dirichlet: np.ndarray,
    eps: float,
    max_iter: int,
    iterations: np.ndarray,
    prev_state: Optional[np.ndarray] = None,
    rate_scale: float = 0.0,
    on_iterate: Optional[IterateCallback] = None,
    params_index: Optional[np.ndarray] = None
) -> None:
    """
    对一个批次就地执行 Newton 迭代

    w 为 (n_free, P) 的初始猜测并就地更新；rate_scale > 0 时残差包含
    m((U - U_prev) * rate_scale, v)，Jacobian 相应加上 rate_scale * M

    Raises:
        ArgumentError: max_iter < 1
        LinearSolveError / ConvergenceError: 标注出错的参数序号
    """
    if max_iter < 1:
        raise ArgumentError(f'max_iter 必须 >= 1: {max_iter}')
    space = problem.space
    residual_form = problem.residual_form()
    jacobian_form = problem.jacobian_form()
    if rate_scale > 0:
        jacobian_form = jacobian_form + problem.mass_form(scale=rate_scale)
    index = np.arange(len(batch)) if params_index is None else params_index
    active = np.arange(len(batch))
    history = [[] for _ in range(len(batch))]

    for _ in range(max_iter):
        sub = ParamBatch(batch.mus[active], None if batch.ts is None else batch.ts[active])
        state = space.lift(w[:, active], dirichlet[:, active])
        rate = None
        if rate_scale > 0:
            rate = (state - prev_state[:, active]) * rate_scale
        r = assemble_batched(residual_form, sub, space, cells=problem.residual_cells, state=state, rate=rate,
                             is_matrix=False)
        J = assemble_batched(jacobian_form, sub, space, cells=problem.jacobian_cells, state=state,
                             is_matrix=True)
        if on_iterate is not None:
            on_iterate(index[active], state, r, J)

        converged = []
        for a, j in enumerate(active):
            dw = lu_solve(J.param(a), -r.values[:, a], param=int(index[j]))
            w[:, j] += dw
            iterations[j] += 1
            norm = float(np.linalg.norm(dw))
            history[j].append(norm)
            logger.debug('param %d iter %d: |dw| = %.3e', index[j], iterations[j], norm)
            if problem.linear or norm < eps:
                converged.append(a)
        active = np.delete(active, converged)
        if active.size == 0:
            return

    j = int(active[0])
    raise ConvergenceError(f'Newton 在 {max_iter} 次迭代内未收敛', history[j][-1], history[j]).tag_param(
        int(index[j]))


def fom_solve_steady(
    problem: ProblemDef,
    realization: Union[Realization, ParamBatch],
    eps: float = 1e-10,
    max_iter: int = 20,
    on_iterate: Optional[IterateCallback] = None
) -> Tuple[BatchedVector, RunStats]:
    """
    稳态全阶 Newton 求解

    Args:
        problem: 稳态问题
        realization: 参数
        eps: ||dw||_2 < eps 时停止
        max_iter: 最大迭代次数
        on_iterate: 每次装配后的回调（快照采集用）

    Returns:
        (自由自由度解 BatchedVector, RunStats)

    Raises:
        ArgumentError: 问题是瞬态的
        LinearSolveError: Jacobian 奇异
        ConvergenceError: 超过 max_iter
    """
    if problem.transient:
        raise ArgumentError(f'{problem.name} 是瞬态问题，请使用 fom_solve_transient')
    space = problem.space
    batch = _as_batch(realization)
    P = len(batch)
    iterations = np.zeros(P, dtype=int)

    with measure() as m:
        gD = interpolate_dirichlet(problem.dirichlet, batch, space)
        w = stats.zeros((space.n_free, P), order='F')
        newton_batch(problem, batch, w, gD, eps, max_iter, iterations, on_iterate=on_iterate)

    logger.info('%s: %d 个参数的全阶稳态求解完成，%.3f ms', problem.name, P, m.wall_ns / 1e6)
    return BatchedVector(w), RunStats(m.wall_ns, m.alloc_bytes, iterations.tolist(), P)


def fom_solve_transient(
    problem: ProblemDef,
    realization: Realization,
    theta: float = 1.0,
    eps: float = 1e-10,
    max_iter: int = 20
) -> Tuple[SnapshotTensor, RunStats]:
    """
    theta 方法时间推进

    每步求解 u_theta（Dirichlet 值 theta*g_n + (1-theta)*g_{n-1}，时间 t_{n-1} + theta*dt）:
        M (U_theta - U_{n-1}) / (theta dt) + r(t_theta, U_theta) = 0
    再外推 u_n = u_{n-1} + (u_theta - u_{n-1}) / theta；theta = 1 即向后 Euler

    Args:
        problem: 瞬态问题
        realization: 带均匀时间网格的 Realization
        theta: (0, 1] 内的 theta
        eps, max_iter: Newton 停止准则

    Returns:
        (N_free x N_t x N_mu 的 SnapshotTensor, RunStats)；Dirichlet 自由度不存储

    Raises:
        ArgumentError: 问题非瞬态、时间网格缺失或不均匀、theta 越界
    """
    if not problem.transient:
        raise ArgumentError(f'{problem.name} 不是瞬态问题')
    if realization.times is None:
        raise ArgumentError('瞬态求解需要带时间网格的 Realization')
    if not 0.0 < theta <= 1.0:
        raise ArgumentError(f'theta 必须在 (0, 1] 内: {theta}')
    times = np.asarray(realization.times, dtype=float)
    steps = np.diff(times)
    dt = float(steps.mean())
    if np.any(steps <= 0) or np.max(np.abs(steps - dt)) > 1e-12 * max(abs(dt), 1.0):
        raise ArgumentError('时间网格必须均匀且严格递增')

    space = problem.space
    mus = realization.params
    P = mus.shape[0]
    nt = times.size - 1
    steady = ParamBatch(mus)
    iterations = np.zeros(P, dtype=int)

    with measure() as m:
        U = stats.zeros((space.n_free, nt, P), order='F')
        if problem.initial_condition is None:
            w_prev = stats.zeros((space.n_free, P), order='F')
        else:
            w_prev = nodal_values(problem.initial_condition, steady, space, space.free_dofs)
        g_prev = interpolate_dirichlet(problem.dirichlet, ParamBatch(mus, np.full(P, times[0])), space)
        for n in range(1, nt + 1):
            t_theta = times[n - 1] + theta * dt
            g_n = interpolate_dirichlet(problem.dirichlet, ParamBatch(mus, np.full(P, times[n])), space)
            g_theta = theta * g_n + (1.0 - theta) * g_prev
            prev_state = space.lift(w_prev, g_prev)
            w_theta = w_prev.copy(order='F')
            try:
                newton_batch(problem, ParamBatch(mus, np.full(P, t_theta)), w_theta, g_theta, eps, max_iter,
                             iterations, prev_state=prev_state, rate_scale=1.0 / (theta * dt))
            except ROMError as exc:
                logger.error('时间步 %d (t=%.4g) 求解失败: %s', n, times[n], exc)
                raise
            w_prev = w_prev + (w_theta - w_prev) / theta
            U[:, n - 1, :] = w_prev
            g_prev = g_n

    logger.info('%s: %d 个参数 x %d 步的全阶瞬态求解完成，%.3f ms', problem.name, P, nt, m.wall_ns / 1e6)
    tensor = SnapshotTensor(U, ('space', 'time', 'param'), RealizationEcho.of(realization))
    return tensor, RunStats(m.wall_ns, m.alloc_bytes, iterations.tolist(), P)
