"""
快照张量模块

SnapshotTensor：带轴标签的稠密快照块（第一轴变化最快），
以及算法所需的 mode-1 / mode-2 展开与空间收缩
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from params.sampling import Realization
from utils.errors import ArgumentError, ShapeError

AXIS_LABELS = ('space', 'space_nnz', 'time', 'param', 'reduced')
SPACE_AXES = ('space', 'space_nnz')


@dataclass(frozen=True)
class RealizationEcho:
    """快照所属 Realization 的回显（种子、策略、参数盒）"""

    seed: int = 0
    strategy: Optional[str] = None
    bounds: Optional[np.ndarray] = None

    @classmethod
    def of(cls, realization: Optional[Realization]) -> 'RealizationEcho':
        if realization is None:
            return cls()
        return cls(int(realization.seed), realization.strategy, realization.bounds)

    def same_as(self, other: 'RealizationEcho') -> bool:
        if self.seed != other.seed or self.strategy != other.strategy:
            return False
        if self.bounds is None or other.bounds is None:
            return self.bounds is None and other.bounds is None
        return np.array_equal(self.bounds, other.bounds)


class SnapshotTensor:
    """
    快照张量

    dims 为 (N,)、(N, N_mu) 或 (N, N_t, N_mu)；空间轴只索引自由自由度。
    数据以 Fortran 序存放，与文件中的规范顺序（空间最快，其次时间，最后参数）一致

    Attributes:
        data: 稠密数组
        axes: 轴标签元组
        echo: Realization 回显
    """

    def __init__(self, data: np.ndarray, axes: Sequence[str],
                 echo: Optional[RealizationEcho] = None) -> None:
        axes = tuple(axes)
        data = np.asfortranarray(np.asarray(data, dtype=float))
        if data.ndim != len(axes):
            raise ShapeError(f'数据维数 {data.ndim} 与轴标签 {axes} 不符')
        unknown = [a for a in axes if a not in AXIS_LABELS]
        if unknown:
            raise ShapeError(f'未知轴标签: {unknown}')
        if len(set(axes)) != len(axes):
            raise ShapeError(f'轴标签重复: {axes}')
        self.data = data
        self.axes = axes
        self.echo = echo or RealizationEcho()

    @property
    def dims(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def nparams(self) -> int:
        if 'param' not in self.axes:
            return 1
        return self.data.shape[self.axes.index('param')]

    @property
    def nsteps(self) -> int:
        if 'time' not in self.axes:
            return 0
        return self.data.shape[self.axes.index('time')]

    @property
    def is_transient(self) -> bool:
        return 'time' in self.axes

    def require_axes(self, expected: Sequence[Sequence[str]]) -> None:
        """检查轴标签，每个位置给出允许的标签集合"""
        if len(self.axes) != len(expected) or any(a not in ok for a, ok in zip(self.axes, expected)):
            raise ShapeError(f'轴标签 {self.axes} 不满足要求 {[tuple(e) for e in expected]}')

    def param(self, index: int) -> np.ndarray:
        """第 index 个参数的切片（空间 x 时间 或 空间）"""
        if 'param' not in self.axes:
            raise ShapeError('张量没有参数轴')
        return np.take(self.data, index, axis=self.axes.index('param'))

    def select(self, indices: Sequence[int]) -> 'SnapshotTensor':
        """沿参数轴取子集"""
        if 'param' not in self.axes:
            raise ShapeError('张量没有参数轴')
        data = np.take(self.data, list(indices), axis=self.axes.index('param'))
        return SnapshotTensor(data, self.axes, self.echo)

    def matrix(self) -> np.ndarray:
        """空间 x (其余轴) 的矩阵视图；稳态时即 N x N_mu 快照矩阵"""
        if self.data.ndim == 1:
            return self.data.reshape(-1, 1)
        if self.data.ndim == 2:
            return self.data
        return mode_reshape(self, 1)

    def equals(self, other: 'SnapshotTensor') -> bool:
        """逐位相等（含轴标签与回显）"""
        return (self.axes == other.axes and self.dims == other.dims
                and np.array_equal(self.data, other.data) and self.echo.same_as(other.echo))

    def __repr__(self) -> str:
        return f'SnapshotTensor(dims={self.dims}, axes={self.axes})'


def mode_reshape(S: SnapshotTensor, mode: int) -> np.ndarray:
    """
    展开三阶快照张量

    Args:
        S: 轴为 (space|space_nnz, time, param)（mode 1）或 (reduced, time, param)（mode 2）
        mode: 1 或 2

    Returns:
        mode 1: N x (N_t * N_mu)，列下标时间最快；
        mode 2: N_t x (n1 * N_mu)，列下标约化下标最快（仅为轴交换）

    Raises:
        ShapeError: 轴标签不符
    """
    if mode == 1:
        S.require_axes((SPACE_AXES, ('time',), ('param',)))
        n, nt, npar = S.dims
        return S.data.reshape(n, nt * npar, order='F')
    if mode == 2:
        S.require_axes((('reduced',), ('time',), ('param',)))
        n1, nt, npar = S.dims
        return np.transpose(S.data, (1, 0, 2)).reshape(nt, n1 * npar, order='F')
    raise ArgumentError(f'mode 只能是 1 或 2: {mode}')


def inverse_mode_reshape(M: np.ndarray, mode: int, dims: Tuple[int, int, int],
                         axes: Sequence[str], echo: Optional[RealizationEcho] = None) -> SnapshotTensor:
    """mode_reshape 的逆：由展开矩阵恢复 dims 形状的张量"""
    n, nt, npar = dims
    M = np.asarray(M)
    if mode == 1:
        if M.shape != (n, nt * npar):
            raise ShapeError(f'mode-1 矩阵形状应为 {(n, nt * npar)}，当前 {M.shape}')
        return SnapshotTensor(M.reshape(n, nt, npar, order='F'), axes, echo)
    if mode == 2:
        if M.shape != (nt, n * npar):
            raise ShapeError(f'mode-2 矩阵形状应为 {(nt, n * npar)}，当前 {M.shape}')
        return SnapshotTensor(np.transpose(M.reshape(nt, n, npar, order='F'), (1, 0, 2)), axes, echo)
    raise ArgumentError(f'mode 只能是 1 或 2: {mode}')


def contract_space(S: SnapshotTensor, A: np.ndarray) -> SnapshotTensor:
    """
    空间收缩 U_hat = A @ U_1，结果轴为 (reduced, time, param)

    Args:
        S: 轴为 (space, time, param) 的张量
        A: n1 x N 矩阵（例如 Phi_1^T X）
    """
    U1 = mode_reshape(S, 1)
    if A.shape[1] != U1.shape[0]:
        raise ShapeError(f'收缩矩阵列数 {A.shape[1]} 与空间维数 {U1.shape[0]} 不符')
    _, nt, npar = S.dims
    return inverse_mode_reshape(A @ U1, 1, (A.shape[0], nt, npar), ('reduced', 'time', 'param'), S.echo)
