"""
参数空间与采样模块

定义参数盒 ParamSpace、带时间网格的 TransientParamSpace，
以及在多种采样策略下可复现地生成 Realization
"""

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import qmc

from utils.errors import ArgumentError, ConfigurationError, UnsupportedDimensionError

STRATEGIES = ('uniform', 'halton', 'latin_hypercube', 'normal', 'tensorial_uniform')
DEFAULT_STRATEGY = 'halton'

# Halton 各维度的基：前 10 个素数
HALTON_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ParamSpace:
    """
    参数盒 D = [lo_1, hi_1] x ... x [lo_p, hi_p]

    Attributes:
        bounds: 形状 (p, 2) 的上下界数组
    """

    bounds: np.ndarray

    def __post_init__(self) -> None:
        bounds = np.asarray(self.bounds, dtype=float)
        if bounds.ndim != 2 or bounds.shape[1] != 2 or bounds.shape[0] < 1:
            raise ArgumentError(f'参数空间边界必须是 (p, 2) 数组，当前形状: {bounds.shape}')
        if np.any(bounds[:, 0] >= bounds[:, 1]):
            raise ArgumentError(f'每个维度必须满足 lo < hi: {bounds.tolist()}')
        object.__setattr__(self, 'bounds', _frozen(bounds))

    @classmethod
    def from_flat(cls, pdomain: Sequence[float]) -> 'ParamSpace':
        """由 (lo1, hi1, lo2, hi2, ...) 形式的扁平元组构造"""
        if len(pdomain) % 2 != 0:
            raise ArgumentError(f'pdomain 长度必须为偶数: {pdomain}')
        return cls(np.asarray(pdomain, dtype=float).reshape(-1, 2))

    @property
    def dim(self) -> int:
        return self.bounds.shape[0]

    @property
    def lower(self) -> np.ndarray:
        return self.bounds[:, 0]

    @property
    def upper(self) -> np.ndarray:
        return self.bounds[:, 1]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def map_unit(self, unit: np.ndarray) -> np.ndarray:
        """单位立方体设计仿射映射到参数盒: lo + u * (hi - lo)"""
        return self.lower + np.asarray(unit, dtype=float) * (self.upper - self.lower)

    def contains(self, mu: np.ndarray) -> bool:
        mu = np.asarray(mu, dtype=float)
        return bool(np.all(mu >= self.lower) and np.all(mu <= self.upper))


@dataclass(frozen=True, eq=False)
class TransientParamSpace:
    """
    参数盒与均匀时间网格 t_0 < t_1 < ... < t_Nt 的组合
    """

    space: ParamSpace
    time_grid: np.ndarray

    def __post_init__(self) -> None:
        grid = np.asarray(self.time_grid, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise ArgumentError('时间网格至少需要两个点 (N_t >= 1)')
        steps = np.diff(grid)
        if np.any(steps <= 0):
            raise ArgumentError('时间网格必须严格递增')
        dt = (grid[-1] - grid[0]) / (grid.size - 1)
        if np.max(np.abs(steps - dt)) > 1e-12 * max(abs(dt), 1.0):
            raise ArgumentError('时间网格必须均匀')
        object.__setattr__(self, 'time_grid', _frozen(grid))

    @classmethod
    def from_range(cls, pdomain: Sequence[float], t0: float, dt: float, nsteps: int) -> 'TransientParamSpace':
        """等价于 Julia 的 t0:dt:tf，tf = t0 + nsteps * dt"""
        if nsteps < 1:
            raise ArgumentError(f'nsteps 必须 >= 1: {nsteps}')
        grid = t0 + dt * np.arange(nsteps + 1)
        return cls(ParamSpace.from_flat(pdomain), grid)

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def nsteps(self) -> int:
        return self.time_grid.size - 1

    @property
    def dt(self) -> float:
        return float((self.time_grid[-1] - self.time_grid[0]) / self.nsteps)


@dataclass(frozen=True, eq=False)
class ParamBatch:
    """
    参数化求值的批次：P 个 (mu, t) 对，时间索引变化最快

    Attributes:
        mus: 形状 (P, p)
        ts: 形状 (P,) 的时间值；稳态问题为 None
    """

    mus: np.ndarray
    ts: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.mus.shape[0]

    def __getitem__(self, index: int) -> Tuple[np.ndarray, Optional[float]]:
        t = None if self.ts is None else float(self.ts[index])
        return self.mus[index], t


@dataclass(frozen=True, eq=False)
class Realization:
    """
    从参数空间采样得到的参数集合（可附带完整时间网格）

    Attributes:
        params: 形状 (n, p) 的参数向量
        times: 完整时间网格 t_0..t_Nt；稳态为 None
        seed: 随机种子
        strategy: 采样策略名称
        bounds: 源参数盒边界的回显
    """

    params: np.ndarray
    times: Optional[np.ndarray] = None
    seed: int = 0
    strategy: str = DEFAULT_STRATEGY
    bounds: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        params = np.atleast_2d(np.asarray(self.params, dtype=float))
        object.__setattr__(self, 'params', _frozen(params))
        if self.times is not None:
            object.__setattr__(self, 'times', _frozen(self.times))
        if self.bounds is not None:
            object.__setattr__(self, 'bounds', _frozen(self.bounds))

    def __len__(self) -> int:
        return self.params.shape[0]

    @property
    def nparams(self) -> int:
        return self.params.shape[0]

    @property
    def pdim(self) -> int:
        return self.params.shape[1]

    @property
    def is_transient(self) -> bool:
        return self.times is not None

    @property
    def steps(self) -> np.ndarray:
        """求解的时间步 t_1..t_Nt"""
        if self.times is None:
            raise ArgumentError('稳态 Realization 没有时间网格')
        return self.times[1:]

    @property
    def nsteps(self) -> int:
        return 0 if self.times is None else self.times.size - 1

    @property
    def dt(self) -> float:
        if self.times is None:
            raise ArgumentError('稳态 Realization 没有时间步长')
        return float((self.times[-1] - self.times[0]) / self.nsteps)

    def subset(self, count: int) -> 'Realization':
        """前 count 个参数组成的子 Realization（超降阶快照数 nparams_res / nparams_jac）"""
        count = min(count, self.nparams)
        return Realization(self.params[:count], self.times, self.seed, self.strategy, self.bounds)

    def select(self, indices: Sequence[int]) -> 'Realization':
        return Realization(self.params[list(indices)], self.times, self.seed, self.strategy, self.bounds)

    def batch(self, times: Optional[Sequence[float]] = None) -> ParamBatch:
        """
        展开为参数批次

        Args:
            times: 求值时间；为 None 时瞬态问题使用全部时间步 t_1..t_Nt

        Returns:
            ParamBatch，瞬态时批次下标 b = n + N_t * j（时间最快）
        """
        if times is None and self.times is None:
            return ParamBatch(self.params.copy())
        if times is None:
            times = self.steps
        times = np.asarray(times, dtype=float)
        nt = times.size
        mus = np.repeat(self.params, nt, axis=0)
        ts = np.tile(times, self.nparams)
        return ParamBatch(mus, ts)


def halton_point(index: int, dims: int) -> np.ndarray:
    """
    第 index 个 Halton 点（不加扰、不跳跃）

    Args:
        index: 正整数下标，从 1 开始（跳过全零点）
        dims: 维度，不超过 10

    Returns:
        单位立方体中的点，第 d 个分量是 index 在第 d 个素数基下的根逆
    """
    if index < 1:
        raise ArgumentError(f'Halton 下标必须 >= 1: {index}')
    if dims > len(HALTON_BASES):
        raise UnsupportedDimensionError(f'Halton 序列最多支持 {len(HALTON_BASES)} 维，请求 {dims} 维')
    if dims < 1:
        raise ArgumentError(f'维度必须 >= 1: {dims}')
    point = np.empty(dims)
    for d, base in enumerate(HALTON_BASES[:dims]):
        i, f, r = index, 1.0, 0.0
        while i > 0:
            i, remainder = divmod(i, base)
            f /= base
            r += f * remainder
        point[d] = r
    return point


def _tensor_points_per_axis(nparams: int, dim: int) -> int:
    k = max(1, int(math.floor(nparams ** (1.0 / dim))))
    while k ** dim < nparams:
        k += 1
    return k


def _unit_design(strategy: str, nparams: int, dim: int, seed: int) -> np.ndarray:
    if strategy == 'uniform':
        return np.random.default_rng(seed).random((nparams, dim))
    if strategy == 'halton':
        return np.array([halton_point(i, dim) for i in range(1, nparams + 1)])
    if strategy == 'latin_hypercube':
        # 不扰动：每个分层取中点
        return qmc.LatinHypercube(d=dim, scramble=False, seed=seed).random(nparams)
    if strategy == 'normal':
        # 均值为盒中心，标准差 (hi - lo)/6，单位立方体中即 0.5 与 1/6
        rng = np.random.default_rng(seed)
        return np.clip(rng.normal(0.5, 1.0 / 6.0, size=(nparams, dim)), 0.0, 1.0)
    if strategy == 'tensorial_uniform':
        k = _tensor_points_per_axis(nparams, dim)
        nodes = (2.0 * np.arange(1, k + 1) - 1.0) / (2.0 * k)
        grid = np.array(list(itertools.product(nodes, repeat=dim)))
        return grid[:nparams]
    raise ConfigurationError(f'未知采样策略: {strategy}，可选: {STRATEGIES}')


def sample_realization(
    space: Union[ParamSpace, TransientParamSpace],
    nparams: int,
    strategy: str = DEFAULT_STRATEGY,
    seed: int = 0
) -> Realization:
    """
    从参数空间采样 Realization

    Args:
        space: 参数空间（瞬态空间会把完整时间网格附加到结果上）
        nparams: 参数个数
        strategy: 采样策略，默认 halton
        seed: 随机种子，相同 (strategy, seed, nparams) 给出逐位相同的结果

    Returns:
        Realization

    Raises:
        ConfigurationError: 未知采样策略
        ArgumentError: nparams < 1
    """
    if strategy not in STRATEGIES:
        raise ConfigurationError(f'未知采样策略: {strategy}，可选: {STRATEGIES}')
    if nparams < 1:
        raise ArgumentError(f'nparams 必须 >= 1: {nparams}')

    if isinstance(space, TransientParamSpace):
        box, times = space.space, space.time_grid
    else:
        box, times = space, None

    unit = _unit_design(strategy, nparams, box.dim, seed)
    params = box.map_unit(unit)
    return Realization(params=params, times=times, seed=int(seed), strategy=strategy, bounds=box.bounds)
