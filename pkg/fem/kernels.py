"""
弱形式核模块

参数化系数 ParamFunction、弱形式核 WeakFormKernel，
以及逐单元、批量（P 个参数）计算单元矩阵/向量的 CellIntegrator
"""

from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from fem.mesh import FESpaceDef
from params.sampling import ParamBatch, Realization
from utils import stats
from utils.errors import ArgumentError, EvaluationError

KERNEL_KINDS = ('stiffness', 'mass', 'load', 'nonlinear_reaction')
OPERANDS = ('u', 'u_t')


@dataclass(frozen=True)
class ParamFunction:
    """
    参数化标量函数 (mu[, t]) -> (x -> value)

    x 为形状 (nq, dim) 的点集，返回长度 nq 的数组或可广播的标量

    Example:
        >>> nu = ParamFunction(lambda mu: lambda x: mu[0] * x[:, 0] + mu[1] * x[:, 1])
        >>> g = ParamFunction(lambda mu, t: lambda x: t * x[:, 0], transient=True)
    """

    fun: Callable
    transient: bool = False
    name: str = ''

    def at(self, mu: np.ndarray, t: Optional[float] = None) -> Callable[[np.ndarray], np.ndarray]:
        if self.transient:
            return self.fun(mu, 0.0 if t is None else t)
        return self.fun(mu)

    def evaluate(self, mu: np.ndarray, t: Optional[float], x: np.ndarray) -> np.ndarray:
        values = self.at(mu, t)(x)
        return np.broadcast_to(np.asarray(values, dtype=float), (x.shape[0],))

    @classmethod
    def constant(cls, value: float, name: str = '') -> 'ParamFunction':
        return cls(lambda mu, t: (lambda x: np.full(x.shape[0], float(value))), transient=True,
                   name=name or f'const({value})')


@dataclass(frozen=True)
class WeakFormKernel:
    """
    弱形式核

    Attributes:
        kind: stiffness / mass / load / nonlinear_reaction
        coefficient: 参数化系数
        quad_order: 张量积 Gauss 积分精度阶（至少 2 * order）
        scale: 贡献缩放系数（残差中的载荷项取 -1）
        operand: 向量形式作用的状态，'u' 或时间导数 'u_t'
    """

    kind: str
    coefficient: ParamFunction
    quad_order: int = 2
    scale: float = 1.0
    operand: str = 'u'

    def __post_init__(self) -> None:
        if self.kind not in KERNEL_KINDS:
            raise ArgumentError(f'未知核类型: {self.kind}')
        if self.quad_order < 2:
            raise ArgumentError(f'积分阶必须 >= 2 * order: {self.quad_order}')
        if self.operand not in OPERANDS:
            raise ArgumentError(f'未知作用对象: {self.operand}')

    @property
    def needs_state(self) -> bool:
        return self.kind == 'nonlinear_reaction'


Form = Tuple[WeakFormKernel, ...]


def as_form(kernels: Union[WeakFormKernel, Sequence[WeakFormKernel]]) -> Form:
    if isinstance(kernels, WeakFormKernel):
        return (kernels,)
    return tuple(kernels)


class ParamBlock:
    """
    P 个同形单元数组，连续存放于形状 (P, ...) 的数组中
    """

    __slots__ = ('data',)

    def __init__(self, data: np.ndarray) -> None:
        self.data = data

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, index: int) -> np.ndarray:
        return self.data[index]

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape[1:]


class ReferenceQ1:
    """参考单元 [0,1]^dim 上的一阶形函数与张量积 Gauss 积分"""

    def __init__(self, dim: int, quad_order: int) -> None:
        npts = max(1, int(np.ceil((quad_order + 1) / 2)))
        g, w = np.polynomial.legendre.leggauss(npts)
        g, w = 0.5 * (g + 1.0), 0.5 * w
        if dim == 1:
            self.points = g.reshape(-1, 1)
            self.weights = w
            xi = g
            self.shapes = np.stack([1.0 - xi, xi], axis=1)
            self.grads = np.tile(np.array([[-1.0], [1.0]]), (npts, 1, 1))
        else:
            xi, eta = np.meshgrid(g, g, indexing='xy')
            xi, eta = xi.ravel(), eta.ravel()
            wx, wy = np.meshgrid(w, w, indexing='xy')
            self.points = np.stack([xi, eta], axis=1)
            self.weights = (wx * wy).ravel()
            self.shapes = np.stack([(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta], axis=1)
            dxi = np.stack([-(1 - eta), 1 - eta, eta, -eta], axis=1)
            deta = np.stack([-(1 - xi), -xi, xi, 1 - xi], axis=1)
            self.grads = np.stack([dxi, deta], axis=2)
        self.dim = dim
        self.nq = self.weights.size


class CellIntegrator:
    """
    逐单元批量积分器

    参考单元数据与（均匀笛卡尔网格下恒定的）几何因子只计算一次；
    对单元 k 的求值复用调用方提供的缓存，不做额外分配
    """

    def __init__(self, space: FESpaceDef, quad_order: int = 2) -> None:
        mesh = space.mesh
        ref = ReferenceQ1(mesh.dim, quad_order)
        h = mesh.cell_size
        det = float(np.prod(h))
        grads = ref.grads / h
        self.space = space
        self.ref = ref
        self.h = h
        self.wdet = ref.weights * det
        self.N = ref.shapes
        self.NN = np.einsum('qa,qb->qab', ref.shapes, ref.shapes)
        self.GG = np.einsum('qad,qbd->qab', grads, grads)
        self.nq = ref.nq
        self.nloc = space.dofs_per_cell

    @classmethod
    def for_space(cls, space: FESpaceDef, quad_order: int) -> 'CellIntegrator':
        key = f'integrator:{quad_order}'
        if key not in space.cache:
            space.cache[key] = cls(space, quad_order)
        return space.cache[key]

    def quad_points(self, cell: int) -> np.ndarray:
        return self.space.mesh.cell_origins[cell] + self.ref.points * self.h

    def coefficients(self, kernel: WeakFormKernel, callables: List[Callable], cell: int,
                     out: np.ndarray) -> np.ndarray:
        """在单元 cell 的积分点上对 P 个参数求系数，写入 out (P, nq)"""
        x = self.quad_points(cell)
        for p, fun in enumerate(callables):
            try:
                out[p] = fun(x)
            except Exception as exc:
                raise EvaluationError(f'系数 {kernel.coefficient.name or kernel.kind} 求值失败: {exc}',
                                      cell=cell, param=p) from exc
        out *= self.wdet
        return out

    def matrix_block(self, kernel: WeakFormKernel, coef: np.ndarray, state_loc: Optional[np.ndarray],
                     out: np.ndarray) -> None:
        """累加单元矩阵到 out (P, nloc, nloc)；coef 已乘积分权重"""
        if kernel.kind == 'stiffness':
            out += kernel.scale * np.einsum('pq,qab->pab', coef, self.GG)
        elif kernel.kind == 'mass':
            out += kernel.scale * np.einsum('pq,qab->pab', coef, self.NN)
        elif kernel.kind == 'nonlinear_reaction':
            uq = state_loc @ self.N.T
            out += kernel.scale * np.einsum('pq,qab->pab', 3.0 * coef * uq ** 2, self.NN)
        else:
            raise ArgumentError(f'{kernel.kind} 核不能装配为矩阵')

    def vector_block(self, kernel: WeakFormKernel, coef: np.ndarray, state_loc: Optional[np.ndarray],
                     rate_loc: Optional[np.ndarray], out: np.ndarray) -> None:
        """累加单元向量到 out (P, nloc)"""
        if kernel.kind == 'load':
            out += kernel.scale * (coef @ self.N)
            return
        operand = rate_loc if kernel.operand == 'u_t' else state_loc
        if operand is None:
            return
        if kernel.kind == 'stiffness':
            out += kernel.scale * np.einsum('pq,qab,pb->pa', coef, self.GG, operand)
        elif kernel.kind == 'mass':
            out += kernel.scale * np.einsum('pq,qab,pb->pa', coef, self.NN, operand)
        else:
            uq = operand @ self.N.T
            out += kernel.scale * ((coef * uq ** 3) @ self.N)


def _as_batch(params: Union[Realization, ParamBatch]) -> ParamBatch:
    return params.batch() if isinstance(params, Realization) else params


class CellParamArray:
    """
    惰性的逐单元参数化数组

    索引单元 k 时才计算该单元的 ParamBlock，结果写入一次性分配、反复复用的缓存；
    返回的 ParamBlock 在下一次索引时会被覆盖

    Example:
        >>> cell_mat = elemental_eval(kernel, realization, space)
        >>> blk = cell_mat[0]
        >>> blk[1]     # 第二个参数的单元矩阵
    """

    def __init__(self, form: Form, batch: ParamBatch, space: FESpaceDef, is_matrix: bool,
                 state: Optional[np.ndarray] = None, rate: Optional[np.ndarray] = None,
                 cell_rows: Optional[Dict[int, np.ndarray]] = None) -> None:
        self.form = form
        self.batch = batch
        self.space = space
        self.is_matrix = is_matrix
        self.state = state
        self.rate = rate
        # 紧凑状态：单元 → 状态数组中的行号（约化积分域使用）
        self.cell_rows = cell_rows
        P = len(batch)
        nloc = space.dofs_per_cell
        self.integrators = [CellIntegrator.for_space(space, k.quad_order) for k in form]
        # 一次性缓存：每个核 P 个已绑定参数的系数函数 + 系数缓冲 + 单元块缓冲
        self.callables = [[k.coefficient.at(*batch[p]) for p in range(P)] for k in form]
        self.coef_cache = [stats.empty((P, integ.nq)) for integ in self.integrators]
        shape = (P, nloc, nloc) if is_matrix else (P, nloc)
        self.block_cache = stats.empty(shape)
        self.state_cache = stats.empty((P, nloc)) if state is not None else None
        self.rate_cache = stats.empty((P, nloc)) if rate is not None else None

    def __len__(self) -> int:
        return self.space.mesh.n_cells

    def __iter__(self) -> Iterator[ParamBlock]:
        for k in range(len(self)):
            yield self[k]

    def __getitem__(self, cell: int) -> ParamBlock:
        dofs = self.space.cell_dofs[cell] if self.cell_rows is None else self.cell_rows[cell]
        state_loc = None
        rate_loc = None
        if self.state_cache is not None:
            np.copyto(self.state_cache, self.state[dofs].T)
            state_loc = self.state_cache
        if self.rate_cache is not None:
            np.copyto(self.rate_cache, self.rate[dofs].T)
            rate_loc = self.rate_cache
        out = self.block_cache
        out.fill(0.0)
        for kernel, integ, funs, coef in zip(self.form, self.integrators, self.callables, self.coef_cache):
            integ.coefficients(kernel, funs, cell, coef)
            if self.is_matrix:
                integ.matrix_block(kernel, coef, state_loc, out)
            else:
                integ.vector_block(kernel, coef, state_loc, rate_loc, out)
        return ParamBlock(out)


def elemental_eval(
    kernels: Union[WeakFormKernel, Sequence[WeakFormKernel]],
    params: Union[Realization, ParamBatch],
    space: FESpaceDef,
    is_matrix: Optional[bool] = None,
    state: Optional[np.ndarray] = None,
    rate: Optional[np.ndarray] = None,
    cell_rows: Optional[Dict[int, np.ndarray]] = None
) -> CellParamArray:
    """
    构造惰性的逐单元参数化单元矩阵/向量

    Args:
        kernels: 单个核或核序列（逐项相加）
        params: Realization 或 ParamBatch
        space: 有限元空间
        is_matrix: 是否为矩阵形式；默认当且仅当不含 load 核时为矩阵
        state: 全局自由度状态 (n_dofs, P)，非线性核与向量形式使用
        rate: 时间导数状态 (n_dofs, P)，operand='u_t' 的向量核使用
        cell_rows: 可选的单元 → 紧凑状态行号映射；给出时 state/rate 只需包含这些行

    Returns:
        CellParamArray
    """
    form = as_form(kernels)
    if is_matrix is None:
        is_matrix = all(k.kind != 'load' for k in form)
    batch = _as_batch(params)
    P = len(batch)
    nrows = space.n_dofs if cell_rows is None else None
    for name, arr in (('state', state), ('rate', rate)):
        if arr is not None and (arr.ndim != 2 or arr.shape[1] != P or (nrows is not None and arr.shape[0] != nrows)):
            raise ArgumentError(f'{name} 形状应为 {(space.n_dofs, P)}，当前 {arr.shape}')
    if is_matrix and any(k.needs_state for k in form) and state is None:
        raise ArgumentError('非线性核需要提供状态 state')
    return CellParamArray(form, batch, space, is_matrix, state, rate, cell_rows)
