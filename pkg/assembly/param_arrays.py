"""
参数化全局数组模块

BatchedSparseCSC：所有参数共享同一 CSC 稀疏模式，非零值按参数连续存放；
BatchedVector：N x P 的参数化向量；
SparsityPattern：由单元-自由度连接关系构造的自由-自由稀疏模式及单元散布表
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from fem.mesh import FESpaceDef
from utils import stats
from utils.errors import ArgumentError, AssemblyError

# 模式构造次数，用于验证重复装配不会重算模式
PATTERN_BUILDS = {'count': 0}


@dataclass(frozen=True, eq=False)
class SparsityPattern:
    """
    自由-自由 CSC 稀疏模式

    Attributes:
        nrows, ncols: 矩阵维数
        indptr: 列指针
        indices: 行下标
        cell_slots: (n_cells, nloc, nloc)，单元局部 (a, b) 对应的非零槽位，非自由对为 -1
    """

    nrows: int
    ncols: int
    indptr: np.ndarray
    indices: np.ndarray
    cell_slots: Optional[np.ndarray] = None

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def slot_rows_cols(self) -> tuple:
        """每个非零槽位对应的 (row, col)，即 CSC 模式的逆映射"""
        cols = np.repeat(np.arange(self.ncols), np.diff(self.indptr))
        return self.indices.copy(), cols

    def same_as(self, other: 'SparsityPattern') -> bool:
        return (self.nrows == other.nrows and self.ncols == other.ncols
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices))

    @classmethod
    def for_space(cls, space: FESpaceDef) -> 'SparsityPattern':
        """返回空间缓存中的模式，首次调用时构造"""
        if 'pattern' not in space.cache:
            space.cache['pattern'] = cls.build(space)
        return space.cache['pattern']

    @classmethod
    def build(cls, space: FESpaceDef) -> 'SparsityPattern':
        PATTERN_BUILDS['count'] += 1
        n = space.n_free
        local = space.dof_to_free[space.cell_dofs]
        if np.any(local >= n):
            raise AssemblyError('自由度编号越界')
        nloc = local.shape[1]
        rows = np.repeat(local, nloc, axis=1).ravel()
        cols = np.tile(local, (1, nloc)).ravel()
        keep = (rows >= 0) & (cols >= 0)
        coo = sp.coo_matrix((np.ones(int(keep.sum())), (rows[keep], cols[keep])), shape=(n, n))
        csc = coo.tocsc()
        csc.sum_duplicates()
        csc.sort_indices()
        indptr = csc.indptr.astype(np.int64)
        indices = csc.indices.astype(np.int64)
        lookup = sp.csc_matrix((np.arange(1, indices.size + 1, dtype=float), indices, indptr), shape=(n, n))
        slots = np.full(rows.shape, -1, dtype=np.int64)
        if keep.any():
            slots[keep] = np.asarray(lookup[rows[keep], cols[keep]]).ravel().astype(np.int64) - 1
        return cls(n, n, indptr, indices, slots.reshape(local.shape[0], nloc, nloc))


class BatchedSparseCSC:
    """
    共享稀疏模式的参数化 CSC 矩阵

    数值存放于 (P, nnz) 的 C 连续数组，同一参数的非零值在内存中相邻；
    values 属性给出 nnz x P 视图（参数下标沿第二轴）
    """

    def __init__(self, pattern: SparsityPattern, data: np.ndarray) -> None:
        if data.ndim != 2 or data.shape[1] != pattern.nnz:
            raise ArgumentError(f'数值块形状 {data.shape} 与 nnz={pattern.nnz} 不符')
        self.pattern = pattern
        self.data = data

    @classmethod
    def zeros(cls, pattern: SparsityPattern, nparams: int) -> 'BatchedSparseCSC':
        return cls(pattern, stats.zeros((nparams, pattern.nnz)))

    @property
    def shape(self) -> tuple:
        return self.pattern.nrows, self.pattern.ncols

    @property
    def nparams(self) -> int:
        return self.data.shape[0]

    @property
    def nnz(self) -> int:
        return self.pattern.nnz

    @property
    def values(self) -> np.ndarray:
        """nnz x P 视图"""
        return self.data.T

    def param(self, index: int) -> sp.csc_matrix:
        """第 index 个参数的 scipy CSC 矩阵（共享模式数组）"""
        p = self.pattern
        return sp.csc_matrix((self.data[index], p.indices, p.indptr), shape=self.shape)

    def __len__(self) -> int:
        return self.nparams

    def __iter__(self):
        for j in range(self.nparams):
            yield self.param(j)


class BatchedVector:
    """N x P 参数化向量，第 j 列为参数 j 的向量"""

    def __init__(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        self.values = values

    @classmethod
    def zeros(cls, n: int, nparams: int) -> 'BatchedVector':
        return cls(stats.zeros((n, nparams), order='F'))

    @property
    def size(self) -> int:
        return self.values.shape[0]

    @property
    def nparams(self) -> int:
        return self.values.shape[1]

    def param(self, index: int) -> np.ndarray:
        return self.values[:, index]

    def __len__(self) -> int:
        return self.nparams


def nonzeros(matrix: sp.spmatrix, pattern: SparsityPattern) -> np.ndarray:
    """按给定模式提取稀疏矩阵的非零值向量（scatter_nnz 的逆）"""
    csc = sp.csc_matrix(matrix, shape=(pattern.nrows, pattern.ncols))
    rows, cols = pattern.slot_rows_cols()
    return np.asarray(csc[rows, cols]).ravel()


def scatter_nnz(pattern: SparsityPattern, z: np.ndarray) -> sp.csc_matrix:
    """
    把长度 nnz 的向量散布回稀疏矩阵

    Args:
        pattern: 稀疏模式
        z: 非零值向量

    Returns:
        与模式同形的 scipy CSC 矩阵

    Raises:
        ArgumentError: 长度不等于 nnz
    """
    z = np.asarray(z, dtype=float).ravel()
    if z.size != pattern.nnz:
        raise ArgumentError(f'向量长度 {z.size} 与 nnz={pattern.nnz} 不符')
    return sp.csc_matrix((z.copy(), pattern.indices.copy(), pattern.indptr.copy()),
                         shape=(pattern.nrows, pattern.ncols))
