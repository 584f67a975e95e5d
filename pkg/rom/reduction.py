"""
降阶基构造模块

pod：按相对能量尾部截断的 POD，可选 X 加权（X = H^T H，对 H M 做 SVD 后三角回代）；
strb：空间-时间两阶段 POD（先空间后时间），返回 Kron(Phi_2, Phi_1) 的因子；
randomized_range / randomized_svd：Gaussian 草图的随机化值域求取与 SVD
"""

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from snapshots.tensor import SPACE_AXES, SnapshotTensor, contract_space, mode_reshape
from utils.errors import ArgumentError, CholeskyError, DegenerateInputError, ShapeError
from utils.logger import get_logger

logger = get_logger(__name__)

POD_METHODS = ('svd', 'randomized')
NormMatrix = Optional[Union[np.ndarray, sp.spmatrix]]


def _apply(X: NormMatrix, v: np.ndarray) -> np.ndarray:
    return v if X is None else X @ v


@dataclass(frozen=True, eq=False)
class Projection:
    """
    降阶基投影

    Attributes:
        basis: N x n 的基 Phi，满足 Phi^T X Phi = I
        norm_matrix: 范数矩阵 X（None 表示单位阵）
        singular_values: POD 的全部奇异值（保留部分在前）
        tol: 截断容差
    """

    basis: np.ndarray
    norm_matrix: NormMatrix = None
    singular_values: Optional[np.ndarray] = None
    tol: float = 0.0

    def __post_init__(self) -> None:
        basis = np.asarray(self.basis, dtype=float)
        if basis.ndim != 2 or basis.shape[1] < 1:
            raise ArgumentError(f'基必须是至少一列的矩阵，当前形状 {basis.shape}')
        object.__setattr__(self, 'basis', basis)

    @property
    def n(self) -> int:
        return self.basis.shape[1]

    @property
    def size(self) -> int:
        return self.basis.shape[0]

    def project(self, w: np.ndarray) -> np.ndarray:
        """w_hat = Phi^T X w（w 可为 N 或 N x k）"""
        w = np.asarray(w, dtype=float)
        if w.shape[0] != self.size:
            raise ShapeError(f'向量长度 {w.shape[0]} 与基的行数 {self.size} 不符')
        return self.basis.T @ _apply(self.norm_matrix, w)

    def reconstruct(self, coords: np.ndarray) -> np.ndarray:
        coords = np.asarray(coords, dtype=float)
        if coords.shape[0] != self.n:
            raise ShapeError(f'约化坐标长度 {coords.shape[0]} 与基维数 {self.n} 不符')
        return self.basis @ coords


@dataclass(frozen=True, eq=False)
class TransientProjection:
    """
    空间-时间投影：空间基 Phi_1（X 正交）与时间基 Phi_2（l2 正交）

    向量化约定为空间最快，因此空间-时间基为 Kron(Phi_2, Phi_1)，
    约化下标 i1 + n1 * i2
    """

    spatial: Projection
    temporal: Projection

    @property
    def basis(self) -> np.ndarray:
        return self.spatial.basis

    @property
    def temporal_basis(self) -> np.ndarray:
        return self.temporal.basis

    @property
    def norm_matrix(self) -> NormMatrix:
        return self.spatial.norm_matrix

    @property
    def tol(self) -> float:
        return self.spatial.tol

    @property
    def n1(self) -> int:
        return self.spatial.n

    @property
    def n2(self) -> int:
        return self.temporal.n

    @property
    def n(self) -> int:
        return self.n1 * self.n2

    @property
    def size(self) -> int:
        return self.spatial.size

    @property
    def nsteps(self) -> int:
        return self.temporal.size

    def kron_basis(self) -> np.ndarray:
        """显式 Kron(Phi_2, Phi_1)，仅供小规模校验"""
        return np.kron(self.temporal.basis, self.spatial.basis)

    def project(self, w: np.ndarray) -> np.ndarray:
        """Kron(Phi_2, Phi_1)^T (I_t ⊗ X) w，按因子计算"""
        w = np.asarray(w, dtype=float).ravel(order='F')
        if w.size != self.size * self.nsteps:
            raise ShapeError(f'向量长度 {w.size} 与 N * N_t = {self.size * self.nsteps} 不符')
        W = w.reshape(self.size, self.nsteps, order='F')
        C = self.spatial.basis.T @ _apply(self.norm_matrix, W) @ self.temporal.basis
        return C.ravel(order='F')

    def reconstruct(self, coords: np.ndarray) -> np.ndarray:
        """Phi_1 C Phi_2^T，返回 N x N_t，不显式构造 Kron 基"""
        coords = np.asarray(coords, dtype=float).ravel()
        if coords.size != self.n:
            raise ShapeError(f'约化坐标长度 {coords.size} 与 n1 * n2 = {self.n} 不符')
        C = coords.reshape(self.n1, self.n2, order='F')
        return self.spatial.basis @ C @ self.temporal.basis.T


def truncation_rank(singular_values: np.ndarray, tol: float) -> int:
    """满足 sqrt(sum_{i>k} s_i^2) <= tol * sqrt(sum s_i^2) 的最小 k（至少为 1）"""
    s2 = np.asarray(singular_values, dtype=float) ** 2
    total = s2.sum()
    tail = np.maximum(total - np.cumsum(s2), 0.0)
    return int(np.argmax(tail <= tol ** 2 * total)) + 1


def cholesky_factor(X: Union[np.ndarray, sp.spmatrix]) -> np.ndarray:
    """
    上三角 Cholesky 因子 H，X = H^T H

    Raises:
        CholeskyError: X 非对称或非正定
    """
    dense = X.toarray() if sp.issparse(X) else np.asarray(X, dtype=float)
    if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
        raise CholeskyError(f'范数矩阵必须是方阵，当前形状 {dense.shape}')
    if not np.allclose(dense, dense.T, rtol=1e-12, atol=1e-14 * np.abs(dense).max()):
        raise CholeskyError('范数矩阵不对称')
    try:
        return la.cholesky(dense, lower=False)
    except la.LinAlgError as exc:
        raise CholeskyError(f'范数矩阵非正定: {exc}') from exc


def _normalize_signs(basis: np.ndarray) -> np.ndarray:
    # 每列绝对值最大的元素取正
    peaks = basis[np.argmax(np.abs(basis), axis=0), np.arange(basis.shape[1])]
    return basis * np.where(peaks < 0, -1.0, 1.0)


def randomized_range(
    M: np.ndarray,
    rank: int,
    oversample: int = 10,
    seed: int = 0,
    power_iters: int = 0
) -> np.ndarray:
    """
    随机化值域求取（稠密 Gaussian 草图）

    Args:
        M: m x k 矩阵
        rank: 目标秩
        oversample: 过采样列数
        seed: 随机种子（相同种子逐位可复现）
        power_iters: 子空间幂迭代次数

    Returns:
        列正交的 Q，形状 m x (rank + oversample)

    Raises:
        ArgumentError: rank + oversample 超过 min(m, k)
    """
    M = np.asarray(M, dtype=float)
    m, k = M.shape
    nsamples = rank + oversample
    if rank < 1 or oversample < 0 or nsamples > min(m, k):
        raise ArgumentError(f'rank + oversample = {nsamples} 必须 <= min(m, k) = {min(m, k)}')
    rng = np.random.default_rng(seed)
    omega = rng.standard_normal((k, nsamples))
    Q, _ = np.linalg.qr(M @ omega)
    for _ in range(power_iters):
        Z, _ = np.linalg.qr(M.T @ Q)
        Q, _ = np.linalg.qr(M @ Z)
    return Q


def randomized_svd(
    M: np.ndarray,
    rank: int,
    oversample: int = 10,
    seed: int = 0,
    power_iters: int = 1
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    随机化截断 SVD：先求值域 Q，再对 Q^T M 做稠密 SVD

    Returns:
        (U, s, Vt)，各自截断到 rank
    """
    M = np.asarray(M, dtype=float)
    oversample = min(oversample, min(M.shape) - rank)
    Q = randomized_range(M, rank, oversample, seed, power_iters)
    Ub, s, Vt = la.svd(Q.T @ M, full_matrices=False)
    return (Q @ Ub)[:, :rank], s[:rank], Vt[:rank]


def pod(
    M: np.ndarray,
    tol: float,
    X: NormMatrix = None,
    method: str = 'svd',
    rank: Optional[int] = None,
    seed: int = 0
) -> Projection:
    """
    截断 POD

    Args:
        M: N x k 快照矩阵
        tol: (0, 1) 内的相对能量容差
        X: 可选的对称正定范数矩阵
        method: 'svd'（稠密）或 'randomized'（需要 rank，截断只在前 rank 个奇异值上判断）
        rank: 随机化 SVD 的目标秩
        seed: 随机化 SVD 的种子

    Returns:
        X 正交的 Projection

    Raises:
        DegenerateInputError: M 全零
        CholeskyError: X 非对称正定

    Example:
        >>> proj = pod(snapshots.matrix(), 1e-4, X)
        >>> proj.n
        3
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ShapeError(f'POD 输入必须是矩阵，当前维数 {M.ndim}')
    if not 0.0 < tol < 1.0:
        raise ArgumentError(f'tol 必须在 (0, 1) 内: {tol}')
    if M.size == 0 or not np.any(M):
        raise DegenerateInputError('快照矩阵全零，无法构造 POD 基')
    if method not in POD_METHODS:
        raise ArgumentError(f'未知 POD 方法: {method}，可选: {POD_METHODS}')

    # 1. 加权：对 H M 做分解
    H = None if X is None else cholesky_factor(X)
    HM = M if H is None else H @ M

    # 2. SVD
    if method == 'svd':
        U, s, _ = la.svd(HM, full_matrices=False)
    else:
        if rank is None:
            raise ArgumentError('randomized POD 需要给出 rank')
        U, s, _ = randomized_svd(HM, min(rank, min(HM.shape)), seed=seed)

    # 3. 截断并回代 Phi = H^{-1} Phi_tilde
    n = truncation_rank(s, tol)
    basis = U[:, :n]
    if H is not None:
        basis = la.solve_triangular(H, basis, lower=False)
    basis = _normalize_signs(basis)
    logger.info('POD: 保留 %d / %d 个模态 (tol=%.1e)', n, s.size, tol)
    return Projection(basis, X, s, tol)


def strb(
    U: SnapshotTensor,
    X: NormMatrix,
    tol: float,
    tol_time: Optional[float] = None
) -> TransientProjection:
    """
    空间-时间两阶段 POD

    1. mode-1 展开 U_1 (N x N_t N_mu)，X 加权 POD 得 Phi_1
    2. 空间收缩 U_hat_1 = Phi_1^T X U_1
    3. mode-2 展开 (N_t x n1 N_mu)，l2 POD 得 Phi_2

    Args:
        U: 轴为 (space|space_nnz, time, param) 的快照张量
        X: 空间范数矩阵（None 表示单位阵）
        tol: 空间容差
        tol_time: 时间容差，默认同 tol

    Returns:
        TransientProjection，n = n1 * n2
    """
    U.require_axes((SPACE_AXES, ('time',), ('param',)))
    spatial = pod(mode_reshape(U, 1), tol, X)
    contraction = _apply(X, spatial.basis).T
    U_hat = contract_space(U, contraction)
    temporal = pod(mode_reshape(U_hat, 2), tol if tol_time is None else tol_time)
    logger.info('空间-时间 POD: n1=%d, n2=%d', spatial.n, temporal.n)
    return TransientProjection(spatial, temporal)


def galerkin_coords(proj: Union[Projection, TransientProjection], w: np.ndarray) -> np.ndarray:
    """
    全阶向量的约化坐标

    稳态: Phi^T X w；空间-时间: Kron(Phi_2, Phi_1)^T (I_t ⊗ X) w（w 按空间最快展平，或 N x N_t）
    """
    return proj.project(w)
