"""
问题定义模块

ProblemDef 组合有限元空间、参数空间、弱形式核、Dirichlet 数据与初值；
内置问题注册表：poisson2d, heat2d, nonlinear_reaction2d
"""

from dataclasses import dataclass, replace
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from fem.kernels import Form, ParamFunction, WeakFormKernel
from fem.mesh import FESpaceDef, build_mesh_and_space
from params.sampling import ParamSpace, TransientParamSpace
from utils.errors import ArgumentError, ConfigurationError


@dataclass(frozen=True, eq=False)
class ProblemDef:
    """
    参数化 PDE 问题

    残差 r(u) = a(u, v) + c u^3 v [+ m(u_t, v)] - f v，只在自由行上装配；
    Dirichlet 自由度被消去，其数值 g 作为提升项进入残差

    Attributes:
        name: 问题名称
        space: 有限元空间
        param_space: 参数空间（瞬态问题为 TransientParamSpace）
        stiffness: 刚度核 a
        load: 载荷核 f（可选）
        mass: 质量核 m（瞬态问题必需）
        reaction: 非线性反应核 c u^3（可选）
        dirichlet: Dirichlet 数据 g(mu[, t], x)
        initial_condition: 初值 u0(mu, x)，None 表示零初值
        residual_cells / jacobian_cells: 残差与 Jacobian 的积分单元列表，None 表示全部单元
    """

    name: str
    space: FESpaceDef
    param_space: Union[ParamSpace, TransientParamSpace]
    stiffness: WeakFormKernel
    dirichlet: ParamFunction
    load: Optional[WeakFormKernel] = None
    mass: Optional[WeakFormKernel] = None
    reaction: Optional[WeakFormKernel] = None
    initial_condition: Optional[ParamFunction] = None
    residual_cells: Optional[np.ndarray] = None
    jacobian_cells: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if isinstance(self.param_space, TransientParamSpace) and self.mass is None:
            raise ArgumentError('瞬态问题必须同时给出刚度核与质量核')

    @property
    def transient(self) -> bool:
        return isinstance(self.param_space, TransientParamSpace)

    @property
    def linear(self) -> bool:
        return self.reaction is None

    def residual_form(self) -> Form:
        terms = [self.stiffness]
        if self.reaction is not None:
            terms.append(self.reaction)
        if self.transient:
            terms.append(replace(self.mass, operand='u_t'))
        if self.load is not None:
            terms.append(replace(self.load, scale=-1.0))
        return tuple(terms)

    def jacobian_form(self) -> Form:
        """关于 u 的 Jacobian（不含时间耦合的质量项）"""
        terms = [self.stiffness]
        if self.reaction is not None:
            terms.append(self.reaction)
        return tuple(terms)

    def mass_form(self, scale: float = 1.0) -> Form:
        if self.mass is None:
            raise ArgumentError(f'问题 {self.name} 没有质量核')
        return (replace(self.mass, scale=scale, operand='u'),)

    def echo(self) -> dict:
        """兼容性检查用的问题回显"""
        mesh = self.space.mesh
        info = {
            'name': self.name,
            'domain': [float(v) for v in mesh.domain.ravel()],
            'cells': [int(c) for c in mesh.cells],
            'dirichlet_tag': self.space.dirichlet_tag,
            'n_free': self.space.n_free,
            'pdomain': [float(v) for v in (self.param_space.space.bounds if self.transient
                                           else self.param_space.bounds).ravel()],
            'forms': [k.kind for k in self.residual_form()],
        }
        if self.transient:
            info['t0'] = float(self.param_space.time_grid[0])
            info['dt'] = self.param_space.dt
            info['nsteps'] = self.param_space.nsteps
        return info


def _poisson2d(domain, cells, pdomain, tdomain=None) -> ProblemDef:
    # 刚度系数对 mu 为两项仿射
    _, space = build_mesh_and_space(domain, cells, 'boundary')
    nu = ParamFunction(lambda mu: (lambda x: mu[0] * x[:, 0] + mu[1] * x[:, 1]), name='nu')
    f = ParamFunction.constant(1.0, name='f')
    g = ParamFunction(lambda mu: (lambda x: x[:, 0]), name='g')
    return ProblemDef(
        name='poisson2d',
        space=space,
        param_space=ParamSpace.from_flat(pdomain),
        stiffness=WeakFormKernel('stiffness', nu),
        load=WeakFormKernel('load', f),
        dirichlet=g,
    )


def heat_exact(mu: np.ndarray, t: float) -> Callable[[np.ndarray], np.ndarray]:
    """热方程制造解 u(mu, t) = t * (mu_1 x_1^2 + mu_2 x_2^2)"""
    return lambda x: t * (mu[0] * x[:, 0] ** 2 + mu[1] * x[:, 1] ** 2)


def _heat2d(domain, cells, pdomain, tdomain) -> ProblemDef:
    if tdomain is None:
        raise ConfigurationError('heat2d 需要 tdomain')
    t0, dt, nsteps = tdomain
    _, space = build_mesh_and_space(domain, cells, 'boundary')
    # f = du/dt - Laplace(u) = mu_1 x_1^2 + mu_2 x_2^2 - 2 t (mu_1 + mu_2)
    f = ParamFunction(
        lambda mu, t: (lambda x: mu[0] * x[:, 0] ** 2 + mu[1] * x[:, 1] ** 2 - 2.0 * t * (mu[0] + mu[1])),
        transient=True, name='f')
    return ProblemDef(
        name='heat2d',
        space=space,
        param_space=TransientParamSpace.from_range(pdomain, t0, dt, int(nsteps)),
        stiffness=WeakFormKernel('stiffness', ParamFunction.constant(1.0, name='nu')),
        mass=WeakFormKernel('mass', ParamFunction.constant(1.0, name='m')),
        load=WeakFormKernel('load', f),
        dirichlet=ParamFunction(heat_exact, transient=True, name='g'),
        initial_condition=None,
    )


def _nonlinear_reaction2d(domain, cells, pdomain, tdomain=None) -> ProblemDef:
    _, space = build_mesh_and_space(domain, cells, 'boundary')
    c = ParamFunction(lambda mu: (lambda x: np.full(x.shape[0], mu[0])), name='c')
    f = ParamFunction(lambda mu: (lambda x: np.full(x.shape[0], 4.0 * mu[1])), name='f')
    return ProblemDef(
        name='nonlinear_reaction2d',
        space=space,
        param_space=ParamSpace.from_flat(pdomain),
        stiffness=WeakFormKernel('stiffness', ParamFunction.constant(1.0, name='nu')),
        reaction=WeakFormKernel('nonlinear_reaction', c),
        load=WeakFormKernel('load', f),
        dirichlet=ParamFunction(lambda mu: (lambda x: np.zeros(x.shape[0])), name='g'),
    )


PROBLEMS: Dict[str, Callable[..., ProblemDef]] = {
    'poisson2d': _poisson2d,
    'heat2d': _heat2d,
    'nonlinear_reaction2d': _nonlinear_reaction2d,
}


def build_problem(
    name: str,
    domain: Sequence[float],
    cells: Sequence[int],
    pdomain: Sequence[float],
    tdomain: Optional[Tuple[float, float, int]] = None
) -> ProblemDef:
    """
    从注册表构造内置问题

    Args:
        name: poisson2d / heat2d / nonlinear_reaction2d
        domain: 空间区域
        cells: 每轴单元数
        pdomain: 参数盒 (lo1, hi1, lo2, hi2)
        tdomain: (t0, dt, nsteps)，瞬态问题使用

    Raises:
        ConfigurationError: 未知问题名称
    """
    if name not in PROBLEMS:
        raise ConfigurationError(f'未知问题: {name}，可选: {sorted(PROBLEMS)}')
    return PROBLEMS[name](domain, cells, pdomain, tdomain)


def problem_from_config(config) -> ProblemDef:
    """由 RunConfig 构造问题"""
    return build_problem(config.problem, config.domain, config.cells, config.pdomain, config.tdomain_tuple)
