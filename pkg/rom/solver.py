"""
在线求解模块

online_solve：稳态逐参数的超降阶 Newton（线性问题一步）与瞬态线性问题的一次性空间-时间求解；
reconstruct：由约化坐标恢复自由自由度场并给出 Dirichlet 提升值。
在线路径只在约化积分单元（及约化时间步）上装配，不触及长度为 N 的数组
"""

from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg as la

from fem.kernels import Form
from fem.solver import interpolate_dirichlet, nodal_values
from params.sampling import ParamBatch, Realization
from rom.hyper_reduction import HyperReduction, online_coefficients, online_reduced_term, sample_entries
from rom.operator import ReducedOperator
from snapshots.tensor import RealizationEcho, SnapshotTensor
from utils import stats
from utils.errors import ArgumentError, ConvergenceError, LinearSolveError, ShapeError
from utils.logger import get_logger
from utils.stats import RunStats, measure

logger = get_logger(__name__)


def dense_solve(A: np.ndarray, b: np.ndarray, param: Optional[int] = None) -> np.ndarray:
    """
    约化系统的稠密 LU 求解

    Raises:
        LinearSolveError: 约化矩阵奇异或结果非有限
    """
    try:
        x = la.solve(A, b, check_finite=True)
    except (la.LinAlgError, ValueError) as exc:
        raise LinearSolveError(f'约化矩阵奇异: {exc}', param_index=param) from exc
    if not np.all(np.isfinite(x)):
        raise LinearSolveError('约化求解得到非有限值', param_index=param)
    return stats.track(x)


def _reduced_term(hr: HyperReduction, form: Form, rbop: ReducedOperator, batch: ParamBatch,
                  state: np.ndarray, rate: Optional[np.ndarray] = None) -> np.ndarray:
    space = rbop.problem.space
    sampled = sample_entries(hr.domain, form, batch, space, state=state, rate=rate)
    coefficients = online_coefficients(hr, hr.domain.pick(sampled))
    return online_reduced_term(hr, coefficients)


def _steady_solve(rbop: ReducedOperator, mu: np.ndarray, eps: float, max_iter: int,
                  index: int) -> Tuple[np.ndarray, int]:
    problem = rbop.problem
    space = problem.space
    res, jac = rbop.residual, rbop.jacobian
    residual_form, jacobian_form = problem.residual_form(), problem.jacobian_form()
    batch = ParamBatch(mu[None, :])
    g_res = res.domain.dirichlet_values(problem.dirichlet, batch, space)
    g_jac = jac.domain.dirichlet_values(problem.dirichlet, batch, space)

    # 初始猜测为零（只含 Dirichlet 提升）
    w = stats.zeros(rbop.n)
    history: List[float] = []
    for k in range(1, max_iter + 1):
        r_hat = _reduced_term(res, residual_form, rbop, batch, res.domain.state(w, g_res))
        J_hat = _reduced_term(jac, jacobian_form, rbop, batch, jac.domain.state(w, g_jac))
        dw = dense_solve(J_hat, -r_hat, param=index)
        w += dw
        norm = float(np.linalg.norm(dw))
        history.append(norm)
        logger.debug('param %d reduced iter %d: |dw| = %.3e', index, k, norm)
        if problem.linear or norm < eps:
            return w, k
    raise ConvergenceError(f'约化 Newton 在 {max_iter} 次迭代内未收敛', history[-1], history).tag_param(index)


def _transient_samples(hr: HyperReduction, form: Form, rbop: ReducedOperator, mu: np.ndarray,
                       with_rate: bool) -> np.ndarray:
    """在约化时间步 (mu, t_{s+1}) 上以零自由状态装配，返回插值下标处的值"""
    problem = rbop.problem
    space = problem.space
    times = problem.param_space.time_grid
    dt = problem.param_space.dt
    steps = hr.domain.steps
    mus = np.repeat(mu[None, :], steps.size, axis=0)
    batch = ParamBatch(mus, times[steps + 1])
    g_now = hr.domain.dirichlet_values(problem.dirichlet, batch, space)
    rate = None
    if with_rate:
        g_before = hr.domain.dirichlet_values(problem.dirichlet, ParamBatch(mus, times[steps]), space)
        rate = (g_now - g_before) / dt
    sampled = sample_entries(hr.domain, form, batch, space, state=g_now, rate=rate)
    return hr.domain.pick(sampled)


def space_time_system(rbop: ReducedOperator, mu: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    单个参数的约化空间-时间系统（向后 Euler）

    LHS = dt^-1 Kron(T0 - T1, M_hat) + sum_i c_i Kron(W_i2, C_i1)
    RHS = -r_hat [+ dt^-1 Kron(Phi_2[0, :]^T, M_hat w0_hat)]

    Returns:
        (n1 n2 x n1 n2 的 LHS, 长度 n1 n2 的 RHS)，约化下标 i1 + n1 * i2
    """
    problem = rbop.problem
    dt = problem.param_space.dt
    res, jac = rbop.residual, rbop.jacobian

    c_res = online_coefficients(res, _transient_samples(res, problem.residual_form(), rbop, mu, True))
    c_jac = online_coefficients(jac, _transient_samples(jac, problem.jacobian_form(), rbop, mu, False))
    lhs = stats.track(np.kron(rbop.temporal_mass - rbop.temporal_shift, rbop.mass) / dt)
    lhs += online_reduced_term(jac, c_jac)
    rhs = -online_reduced_term(res, c_res)

    if problem.initial_condition is not None:
        space = problem.space
        w0 = nodal_values(problem.initial_condition, ParamBatch(mu[None, :]), space, space.free_dofs)[:, 0]
        w0_hat = rbop.trial.projection.spatial.project(w0)
        first = rbop.trial.projection.temporal_basis[0, :]
        rhs += np.kron(first, rbop.mass @ w0_hat) / dt
    return lhs, rhs


def _check_realization(rbop: ReducedOperator, realization: Realization) -> None:
    problem = rbop.problem
    box = problem.param_space.space if problem.transient else problem.param_space
    if realization.pdim != box.dim:
        raise ShapeError(f'参数维数 {realization.pdim} 与问题参数空间维数 {box.dim} 不符')
    if problem.transient:
        if realization.times is None or realization.nsteps != problem.param_space.nsteps:
            raise ArgumentError('瞬态在线求解需要与问题一致的时间网格')


def online_solve(
    rbop: ReducedOperator,
    realization: Realization,
    eps: float = 1e-10,
    max_iter: int = 20
) -> Tuple[np.ndarray, RunStats]:
    """
    在线超降阶求解

    Args:
        rbop: 约化算子
        realization: 在线参数（与离线参数使用不同种子）
        eps: 约化 Newton 停止准则 ||dw_hat||_2 < eps
        max_iter: 最大迭代次数

    Returns:
        (n x N_mu 的约化坐标, RunStats)

    Raises:
        LinearSolveError: 约化矩阵奇异
        ConvergenceError: 约化 Newton 未收敛（带迭代历史）

    Example:
        >>> coords, rbstats = online_solve(rbop, sample_realization(space, 10, 'uniform', seed=1234))
    """
    _check_realization(rbop, realization)
    P = realization.nparams
    iterations = np.zeros(P, dtype=int)

    with measure() as m:
        coords = stats.zeros((rbop.n, P), order='F')
        for j in range(P):
            mu = realization.params[j]
            if rbop.transient:
                lhs, rhs = space_time_system(rbop, mu)
                coords[:, j] = dense_solve(lhs, rhs, param=j)
                iterations[j] = 1
            else:
                coords[:, j], iterations[j] = _steady_solve(rbop, mu, eps, max_iter, j)

    logger.info('%s: %d 个参数的在线求解完成，%.3f ms', rbop.problem.name, P, m.wall_ns / 1e6)
    return coords, RunStats(m.wall_ns, m.alloc_bytes, iterations.tolist(), P)


def reconstruct(
    rbop: ReducedOperator,
    coords: np.ndarray,
    realization: Realization
) -> Tuple[SnapshotTensor, np.ndarray]:
    """
    由约化坐标恢复全阶场

    Args:
        rbop: 约化算子
        coords: online_solve 返回的 n x N_mu 坐标
        realization: 对应的在线参数

    Returns:
        (自由自由度张量，稳态 (N, N_mu) / 瞬态 (N, N_t, N_mu);
         Dirichlet 值，稳态 (n_dirichlet, N_mu) / 瞬态 (n_dirichlet, N_t, N_mu))

    Raises:
        ShapeError: 坐标形状与约化维数或参数个数不符
    """
    coords = np.asarray(coords, dtype=float)
    if coords.ndim == 1:
        coords = coords.reshape(-1, 1)
    if coords.shape != (rbop.n, realization.nparams):
        raise ShapeError(f'坐标形状 {coords.shape} 应为 ({rbop.n}, {realization.nparams})')
    problem = rbop.problem
    space = problem.space
    echo = RealizationEcho.of(realization)
    projection = rbop.trial.projection

    if not rbop.transient:
        free = SnapshotTensor(projection.reconstruct(coords), ('space', 'param'), echo)
        return free, interpolate_dirichlet(problem.dirichlet, realization, space)

    nt = projection.nsteps
    # Kron 基按因子作用，不显式构造
    data = np.stack([projection.reconstruct(coords[:, j]) for j in range(coords.shape[1])], axis=2)
    free = SnapshotTensor(data, ('space', 'time', 'param'), echo)
    gD = interpolate_dirichlet(problem.dirichlet, realization, space)
    return free, gD.reshape(space.n_dirichlet, nt, realization.nparams, order='F')
