"""
约化算子模块

RBSpace 把有限元空间与降阶投影绑定；ReducedOperator 组合试探/检验约化空间、
残差与 Jacobian 的超降阶，以及瞬态问题精确投影的质量块与时间耦合块。
build_reduced_operator 执行完整离线流程
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Union

import numpy as np
import scipy.sparse as sp

from assembly.assembler import assemble_batched
from fem.kernels import Form, ParamFunction, WeakFormKernel
from fem.mesh import FESpaceDef
from fem.problems import ProblemDef
from params.sampling import ParamBatch, sample_realization
from rom.hyper_reduction import HyperReduction, hyperreduce_matrix, hyperreduce_vector
from rom.reduction import NormMatrix, Projection, TransientProjection, pod, strb
from snapshots.collect import collect_snapshots, jacobian_snapshots, residual_snapshots
from snapshots.tensor import SnapshotTensor
from utils.config import INNER_PRODUCTS, RunConfig
from utils.errors import ArgumentError, ConfigurationError, ShapeError
from utils.logger import get_logger
from utils.stats import measure

logger = get_logger(__name__)

AnyProjection = Union[Projection, TransientProjection]


def _center(problem: ProblemDef) -> np.ndarray:
    box = problem.param_space.space if problem.transient else problem.param_space
    return box.center


def assemble_single(form: Form, space: FESpaceDef, mu: Optional[np.ndarray] = None,
                    t: Optional[float] = None) -> sp.csc_matrix:
    """在单个参数 (mu, t) 上装配自由-自由矩阵"""
    mus = np.zeros((1, 1)) if mu is None else np.atleast_2d(np.asarray(mu, dtype=float))
    batch = ParamBatch(mus, None if t is None else np.array([float(t)]))
    return assemble_batched(form, batch, space, is_matrix=True).param(0)


def default_inner_product(space: FESpaceDef) -> str:
    """有 Dirichlet 约束时取 H1_0 半范，否则取完整 H1 范数"""
    return 'h1_0' if space.n_dirichlet > 0 else 'h1'


def inner_product_matrix(space: FESpaceDef, kind: str) -> NormMatrix:
    """
    离散内积矩阵 X

    Args:
        space: 有限元空间
        kind: h1_0（单位系数刚度）/ h1（刚度 + 质量）/ l2（质量）/ euclidean（单位阵，返回 None）

    Raises:
        ConfigurationError: 未知内积
    """
    if kind not in INNER_PRODUCTS:
        raise ConfigurationError(f'未知内积: {kind}，可选: {INNER_PRODUCTS}')
    if kind == 'euclidean':
        return None
    one = ParamFunction.constant(1.0, name='one')
    form = []
    if kind in ('h1_0', 'h1'):
        form.append(WeakFormKernel('stiffness', one))
    if kind in ('h1', 'l2'):
        form.append(WeakFormKernel('mass', one))
    return assemble_single(tuple(form), space)


@dataclass(frozen=True, eq=False)
class RBSpace:
    """
    约化空间

    Attributes:
        fe_space: 有限元空间
        projection: 稳态 Projection 或空间-时间 TransientProjection
    """

    fe_space: FESpaceDef
    projection: AnyProjection

    def __post_init__(self) -> None:
        if self.projection.size != self.fe_space.n_free:
            raise ShapeError(f'基的行数 {self.projection.size} 与自由自由度数 {self.fe_space.n_free} 不符')

    @property
    def basis(self) -> np.ndarray:
        """空间基 Phi（空间-时间时为空间因子 Phi_1）"""
        return self.projection.basis

    @property
    def n(self) -> int:
        return self.projection.n

    @property
    def is_transient(self) -> bool:
        return isinstance(self.projection, TransientProjection)


@dataclass(frozen=True, eq=False)
class ReducedOperator:
    """
    约化算子

    Attributes:
        problem: 问题定义
        trial / test: 试探与检验约化空间（Galerkin 时二者相同）
        jacobian / residual: Jacobian 与残差的超降阶
        inner_product: 构造 X 的内积类型
        config: 配置回显
        mass: 空间约化质量 Psi_1^T M Phi_1（瞬态）
        temporal_mass: Phi_2^T Phi_2（瞬态）
        temporal_shift: Phi_2^T L Phi_2，L 为次对角平移（瞬态）
        offline_wall_ns: 离线构造耗时
    """

    problem: ProblemDef
    trial: RBSpace
    test: RBSpace
    jacobian: HyperReduction
    residual: HyperReduction
    inner_product: str
    config: Dict[str, Any] = field(default_factory=dict)
    mass: Optional[np.ndarray] = None
    temporal_mass: Optional[np.ndarray] = None
    temporal_shift: Optional[np.ndarray] = None
    offline_wall_ns: int = 0

    def __post_init__(self) -> None:
        if self.problem.transient and (self.mass is None or self.temporal_mass is None
                                       or self.temporal_shift is None):
            raise ArgumentError('瞬态约化算子需要约化质量块与时间耦合块')
        if self.trial.n != self.test.n:
            raise ShapeError(f'试探维数 {self.trial.n} 与检验维数 {self.test.n} 不符')

    @property
    def transient(self) -> bool:
        return self.problem.transient

    @property
    def petrov_galerkin(self) -> bool:
        return self.test is not self.trial

    @property
    def n(self) -> int:
        return self.trial.n

    @property
    def n1(self) -> int:
        return self.trial.projection.n1 if self.transient else self.trial.n

    @property
    def n2(self) -> int:
        return self.trial.projection.n2 if self.transient else 1

    @property
    def tol(self) -> float:
        return self.trial.projection.tol

    def echo(self) -> Dict[str, Any]:
        """兼容性检查用回显：问题（维数、形式）与容差"""
        return {'problem': self.problem.echo(), 'tol': float(self.tol), 'inner_product': self.inner_product}

    def summary(self) -> Dict[str, Any]:
        return {
            'n': self.n,
            'n1': self.n1,
            'n2': self.n2,
            'residual_terms': self.residual.nterms,
            'jacobian_terms': self.jacobian.nterms,
            'residual_cells': int(self.residual.reduced_cells.size),
            'jacobian_cells': int(self.jacobian.reduced_cells.size),
            'offline_wall_ns': int(self.offline_wall_ns),
        }


def _test_space(space: FESpaceDef, trial: AnyProjection, test_basis: Optional[np.ndarray]) -> Optional[RBSpace]:
    if test_basis is None:
        return None
    Psi = np.asarray(test_basis, dtype=float)
    if Psi.shape != trial.basis.shape:
        raise ShapeError(f'检验基形状 {Psi.shape} 必须与试探基 {trial.basis.shape} 一致')
    if np.linalg.matrix_rank(Psi) < Psi.shape[1]:
        raise ArgumentError('检验基必须列满秩')
    spatial = Projection(Psi, None)
    if isinstance(trial, TransientProjection):
        return RBSpace(space, TransientProjection(spatial, trial.temporal))
    return RBSpace(space, spatial)


def temporal_blocks(temporal_basis: np.ndarray):
    """T0 = Phi_2^T Phi_2 与 T1 = Phi_2^T L Phi_2"""
    T = np.asarray(temporal_basis, dtype=float)
    L = sp.eye(T.shape[0], k=-1, format='csr')
    return T.T @ T, T.T @ (L @ T)


def build_reduced_operator(
    problem: ProblemDef,
    config: RunConfig,
    inner_product: Optional[str] = None,
    test_basis: Optional[np.ndarray] = None,
    snapshots: Optional[SnapshotTensor] = None
) -> ReducedOperator:
    """
    离线构造约化算子

    Args:
        problem: 问题定义
        config: 运行配置（tol, nparams, nparams_res, nparams_jac, sampling, seed, theta, Newton 准则）
        inner_product: 覆盖配置中的内积类型
        test_basis: 可选的 Petrov-Galerkin 检验基 Psi（空间因子），默认 Psi = Phi
        snapshots: 已采集的解快照（须来自同一离线 Realization），给出时跳过快照采集

    Returns:
        ReducedOperator

    Raises:
        ArgumentError: nparams_res 或 nparams_jac 为 0；瞬态非线性问题
        其余求解与降阶异常原样传播

    Example:
        >>> rbop = build_reduced_operator(problem, load_config('configs/heat2d.json'))
        >>> rbop.n1, rbop.n2
        (5, 3)
    """
    if config.nparams_res < 1:
        raise ArgumentError(f'nparams_res 必须 >= 1: {config.nparams_res}')
    if config.nparams_jac < 1:
        raise ArgumentError(f'nparams_jac 必须 >= 1: {config.nparams_jac}')
    if problem.transient and not problem.linear:
        raise ArgumentError('空间-时间约化只支持线性瞬态问题')
    space = problem.space
    eps, max_iter = config.newton_tol, config.max_iter

    with measure() as m:
        # 1. 离线参数
        realization = sample_realization(problem.param_space, config.nparams, config.sampling, config.seed)

        # 2. 解快照
        if snapshots is None:
            snaps, fom_stats = collect_snapshots(problem, realization, config.theta, eps, max_iter)
            logger.info('解快照 %s，全阶耗时 %.3f ms', snaps.dims, fom_stats.wall_ns / 1e6)
        else:
            snaps = snapshots
            if snaps.dims[0] != space.n_free or snaps.nparams != realization.nparams:
                raise ShapeError(f'快照形状 {snaps.dims} 与问题或 nparams={realization.nparams} 不符')

        # 3. 范数矩阵与约化基
        kind = inner_product or config.inner_product or default_inner_product(space)
        X = inner_product_matrix(space, kind)
        if problem.transient:
            projection = strb(snaps, X, config.tol)
        else:
            projection = pod(snaps.matrix(), config.tol, X)
        trial = RBSpace(space, projection)
        test = _test_space(space, projection, test_basis) or trial

        # 4. 残差与 Jacobian 的超降阶
        res_snaps = residual_snapshots(problem, realization.subset(config.nparams_res), eps, max_iter)
        residual = hyperreduce_vector(res_snaps, test.projection, config.tol, space, trial.projection)
        jac_snaps, pattern = jacobian_snapshots(problem, realization.subset(config.nparams_jac), eps, max_iter)
        jacobian = hyperreduce_matrix(jac_snaps, pattern, trial.projection, test.projection, config.tol, space)

        # 5. 瞬态问题的精确投影块（质量与参数无关，在参数盒中心求值）
        mass = temporal_mass = temporal_shift = None
        if problem.transient:
            M = assemble_single(problem.mass_form(), space, _center(problem), problem.param_space.time_grid[0])
            mass = test.basis.T @ (M @ trial.basis)
            temporal_mass, temporal_shift = temporal_blocks(projection.temporal_basis)

    rbop = ReducedOperator(
        problem=problem,
        trial=trial,
        test=test,
        jacobian=jacobian,
        residual=residual,
        inner_product=kind,
        config=config.to_dict(),
        mass=mass,
        temporal_mass=temporal_mass,
        temporal_shift=temporal_shift,
        offline_wall_ns=m.wall_ns,
    )
    logger.info('约化算子构造完成: %s', rbop.summary())
    return rbop
