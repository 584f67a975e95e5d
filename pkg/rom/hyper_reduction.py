"""
超降阶模块

DEIM 贪心选点、残差向量（DEIM）与 Jacobian 非零值（MDEIM）的仿射分解、
插值下标到约化积分域（单元与时间步）的映射、预计算的 Galerkin 核，
以及在线系数与约化项的求值
"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as la

from assembly.param_arrays import SparsityPattern, scatter_nnz
from fem.kernels import Form, ParamFunction, elemental_eval
from fem.mesh import FESpaceDef
from fem.solver import nodal_values
from params.sampling import ParamBatch
from rom.reduction import Projection, TransientProjection, pod, strb
from snapshots.tensor import SnapshotTensor
from utils import stats
from utils.errors import ArgumentError, RankDeficiencyError, ShapeError
from utils.logger import get_logger

logger = get_logger(__name__)

HR_KINDS = ('vector', 'matrix')
HR_STRUCTURES = ('steady', 'space_time')
AnyProjection = Union[Projection, TransientProjection]


def deim_indices(Phi: np.ndarray) -> np.ndarray:
    """
    DEIM 贪心选点

    j_1 = argmax |Phi[:, 0]|；第 i 步解 Phi[G, :i] c = Phi[G, i]，
    取残差 r = Phi[:, i] - Phi[:, :i] c 的绝对值最大处。并列时取最小下标

    Args:
        Phi: N x n 列满秩矩阵

    Returns:
        长度 n 的插值下标（从 0 开始）

    Raises:
        RankDeficiencyError: 中间子系统奇异（column 为从 1 开始的列号）

    Example:
        >>> deim_indices(np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]))
        array([0, 1])
    """
    Phi = np.asarray(Phi, dtype=float)
    if Phi.ndim != 2 or Phi.shape[1] > Phi.shape[0]:
        raise ArgumentError(f'DEIM 需要 N x n (n <= N) 矩阵，当前形状 {Phi.shape}')
    N, n = Phi.shape
    scale = np.abs(Phi).max() if Phi.size else 0.0
    G = np.empty(n, dtype=np.int64)
    for i in range(n):
        if i == 0:
            r = Phi[:, 0]
        else:
            A = Phi[G[:i], :i]
            try:
                lu = la.lu_factor(A, check_finite=True)
            except (la.LinAlgError, ValueError) as exc:
                raise RankDeficiencyError('DEIM 插值子系统奇异', column=i + 1) from exc
            if np.min(np.abs(np.diag(lu[0]))) <= 1e-14 * scale:
                raise RankDeficiencyError('DEIM 插值子系统奇异', column=i + 1)
            c = la.lu_solve(lu, Phi[G[:i], i])
            r = Phi[:, i] - Phi[:, :i] @ c
        j = int(np.argmax(np.abs(r)))
        if np.abs(r[j]) <= 1e-14 * max(scale, 1e-300) or j in G[:i]:
            raise RankDeficiencyError('DEIM 残差为零，基不是列满秩', column=i + 1)
        G[i] = j
    return G


def reduced_domain(
    G: Sequence[int],
    pattern: Optional[SparsityPattern],
    cell_dofs: np.ndarray
) -> np.ndarray:
    """
    插值下标对应的约化积分单元

    Args:
        G: 插值槽位；矩阵为 CSC 非零槽位，向量为自由自由度编号
        pattern: 稀疏模式（向量时为 None）
        cell_dofs: 每个单元的自由编号 (n_cells, nloc)，Dirichlet 为 -1

    Returns:
        升序单元列表。矩阵：单元同时包含槽位的行与列；向量：单元包含该自由度

    Raises:
        ArgumentError: 槽位越界

    Example:
        >>> reduced_domain([3], pattern, space.dof_to_free[space.cell_dofs])
    """
    G = np.asarray(G, dtype=np.int64).ravel()
    cell_dofs = np.asarray(cell_dofs)
    mask = np.zeros(cell_dofs.shape[0], dtype=bool)
    if G.size == 0:
        return np.flatnonzero(mask)
    if pattern is None:
        limit = int(cell_dofs.max()) + 1
        if G.min() < 0 or G.max() >= limit:
            raise ArgumentError(f'自由度槽位越界: [0, {limit})')
        for g in G:
            mask |= np.any(cell_dofs == g, axis=1)
        return np.flatnonzero(mask)
    if G.min() < 0 or G.max() >= pattern.nnz:
        raise ArgumentError(f'非零槽位越界: [0, {pattern.nnz})')
    rows, cols = pattern.slot_rows_cols()
    for g in G:
        mask |= np.any(cell_dofs == rows[g], axis=1) & np.any(cell_dofs == cols[g], axis=1)
    return np.flatnonzero(mask)


@dataclass(frozen=True, eq=False)
class ReducedIntegrationDomain:
    """
    约化积分域及在线采样用的聚集映射

    Attributes:
        cells: 约化单元（升序）
        dofs: 约化单元触及的全局自由度（升序）
        local_rows: (R, nloc)，单元局部自由度在 dofs 中的位置
        gather: 向量 (R, nloc) / 矩阵 (R, nloc, nloc)，局部条目在唯一槽位表中的位置，-1 表示不需要
        basis_rows: (K, n) 试探基在 dofs 上的行（Dirichlet 行为零）
        dirichlet_mask: (K,) dofs 中哪些是 Dirichlet 自由度
        slot_pos / step_pos: 每个插值下标在（唯一槽位, 唯一时间步）采样表中的位置
        steps: 唯一时间步下标（时间 t_{s+1}），稳态为 None
    """

    cells: np.ndarray
    dofs: np.ndarray
    local_rows: np.ndarray
    gather: np.ndarray
    basis_rows: np.ndarray
    dirichlet_mask: np.ndarray
    slot_pos: np.ndarray
    step_pos: np.ndarray
    steps: Optional[np.ndarray] = None
    cell_rows: Dict[int, np.ndarray] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, 'cell_rows', {int(c): self.local_rows[r] for r, c in enumerate(self.cells)})

    @property
    def nentries(self) -> int:
        """唯一槽位数"""
        return int(self.slot_pos.max()) + 1 if self.slot_pos.size else 0

    @property
    def is_matrix(self) -> bool:
        return self.gather.ndim == 3

    @classmethod
    def build(cls, slots: np.ndarray, steps: Optional[np.ndarray], space: FESpaceDef,
              pattern: Optional[SparsityPattern], trial_basis: np.ndarray) -> 'ReducedIntegrationDomain':
        """由插值槽位（及时间步）构造约化积分域"""
        slots = np.asarray(slots, dtype=np.int64)
        unique_slots, slot_pos = np.unique(slots, return_inverse=True)
        if steps is None:
            unique_steps, step_pos = None, np.zeros(slots.size, dtype=np.int64)
        else:
            unique_steps, step_pos = np.unique(np.asarray(steps, dtype=np.int64), return_inverse=True)

        free_table = space.dof_to_free[space.cell_dofs]
        cells = reduced_domain(unique_slots, pattern, free_table)
        dofs = np.unique(space.cell_dofs[cells])
        local_rows = np.searchsorted(dofs, space.cell_dofs[cells])

        if pattern is None:
            lookup = np.full(space.n_free, -1, dtype=np.int64)
            table = free_table[cells]
        else:
            lookup = np.full(pattern.nnz, -1, dtype=np.int64)
            table = pattern.cell_slots[cells]
        lookup[unique_slots] = np.arange(unique_slots.size)
        gather = np.where(table >= 0, lookup[table], -1)

        free_index = space.dof_to_free[dofs]
        basis_rows = np.zeros((dofs.size, trial_basis.shape[1]))
        basis_rows[free_index >= 0] = trial_basis[free_index[free_index >= 0]]
        return cls(cells, dofs, local_rows, gather, basis_rows, free_index < 0,
                   slot_pos.astype(np.int64), step_pos.astype(np.int64), unique_steps)

    def dirichlet_values(self, g: ParamFunction, batch: ParamBatch, space: FESpaceDef) -> np.ndarray:
        """约化自由度上的 Dirichlet 值 (K, P)，自由行为零"""
        values = nodal_values(g, batch, space, self.dofs)
        values[~self.dirichlet_mask] = 0.0
        return values

    def state(self, coords: np.ndarray, dirichlet: np.ndarray) -> np.ndarray:
        """约化自由度上的状态 Phi_rows @ coords + g"""
        return self.basis_rows @ np.asarray(coords).reshape(self.basis_rows.shape[1], -1) + dirichlet

    def pick(self, sampled: np.ndarray) -> np.ndarray:
        """从（唯一槽位 x 唯一时间步）采样表取出插值下标处的值"""
        return sampled[self.slot_pos, self.step_pos]


def sample_entries(
    domain: ReducedIntegrationDomain,
    form: Form,
    batch: ParamBatch,
    space: FESpaceDef,
    state: Optional[np.ndarray] = None,
    rate: Optional[np.ndarray] = None
) -> np.ndarray:
    """
    只在约化单元上装配，返回唯一槽位处的值 (nentries, P)

    单元按升序累加，与全局装配在这些槽位上的求和顺序一致

    Args:
        state / rate: 约化自由度上的状态 (K, P)
    """
    P = len(batch)
    out = stats.zeros((domain.nentries, P))
    if domain.cells.size == 0:
        return out
    cell_array = elemental_eval(form, batch, space, is_matrix=domain.is_matrix, state=state, rate=rate,
                                cell_rows=domain.cell_rows)
    for r, cell in enumerate(domain.cells):
        blk = cell_array[int(cell)].data
        pos = domain.gather[r]
        mask = pos >= 0
        out[pos[mask], :] += blk[:, mask].T
    return out


@dataclass(frozen=True, eq=False)
class HyperReduction:
    """
    仿射分解 f(mu) ≈ sum_i c_i(mu) Phi_z[:, i]

    Attributes:
        kind: vector / matrix
        structure: steady / space_time
        basis: 非零值基 Phi_z（空间-时间时为空间因子 Phi_z1）
        temporal_basis: 时间因子 Phi_z2（仅空间-时间）
        indices: 插值下标 G（空间-时间时为 Kron 基中的下标）
        slots / steps: 每个插值下标的空间槽位与时间步
        interp: Phi_z[G, :]
        cores: 稳态 (m, n, n) 或 (m, n)；空间-时间矩阵为空间核 (m1, n1, n1)，向量为 (m, n)
        weights: 空间-时间矩阵的时间权重 (m2, n2, n2)
        domain: 约化积分域
    """

    kind: str
    structure: str
    basis: np.ndarray
    indices: np.ndarray
    slots: np.ndarray
    interp: np.ndarray
    cores: np.ndarray
    domain: ReducedIntegrationDomain
    temporal_basis: Optional[np.ndarray] = None
    steps: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None
    lu: Tuple[np.ndarray, np.ndarray] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.kind not in HR_KINDS or self.structure not in HR_STRUCTURES:
            raise ArgumentError(f'未知超降阶类型: {self.kind}/{self.structure}')
        object.__setattr__(self, 'lu', la.lu_factor(self.interp))

    @property
    def nterms(self) -> int:
        return self.interp.shape[0]

    @property
    def m1(self) -> int:
        return self.basis.shape[1]

    @property
    def m2(self) -> int:
        return 1 if self.temporal_basis is None else self.temporal_basis.shape[1]

    @property
    def reduced_cells(self) -> np.ndarray:
        return self.domain.cells

    @property
    def reduced_times(self) -> Optional[np.ndarray]:
        return self.domain.steps

    def full_basis(self) -> np.ndarray:
        """插值所用的基：稳态为 Phi_z，空间-时间为显式 Kron(Phi_z2, Phi_z1)"""
        if self.temporal_basis is None:
            return self.basis
        return np.kron(self.temporal_basis, self.basis)


def _steady_or_space_time(snaps: SnapshotTensor, tol: float):
    if snaps.is_transient:
        tp = strb(snaps, None, tol)
        Phi1, Phi2 = tp.spatial.basis, tp.temporal.basis
        K = np.kron(Phi2, Phi1)
        G = deim_indices(K)
        return Phi1, Phi2, K, G, G % Phi1.shape[0], G // Phi1.shape[0]
    Phi = pod(snaps.matrix(), tol).basis
    G = deim_indices(Phi)
    return Phi, None, Phi, G, G, None


def hyperreduce_vector(
    res_snaps: SnapshotTensor,
    test: AnyProjection,
    tol: float,
    space: FESpaceDef,
    trial: Optional[AnyProjection] = None
) -> HyperReduction:
    """
    残差的 DEIM 超降阶

    Args:
        res_snaps: 残差快照，轴 (space, param) 或 (space, time, param)
        test: 检验空间投影 Psi
        tol: POD 容差
        space: 有限元空间
        trial: 试探空间投影（约化域状态用），默认同 test

    Returns:
        HyperReduction；核 cores_i = Psi^T Phi_r[:, i]（空间-时间为 Kron(Phi_2^T Phi_z2, Psi_1^T Phi_z1)）

    Raises:
        DegenerateInputError: 快照全零
    """
    if res_snaps.axes[0] != 'space':
        raise ShapeError(f'残差快照第一轴必须是 space: {res_snaps.axes}')
    trial = trial or test
    Phi1, Phi2, K, G, slots, steps = _steady_or_space_time(res_snaps, tol)
    if Phi2 is None:
        cores = (test.basis.T @ Phi1).T
        structure = 'steady'
    else:
        cores = np.kron(test.temporal_basis.T @ Phi2, test.basis.T @ Phi1).T
        structure = 'space_time'
    domain = ReducedIntegrationDomain.build(slots, steps, space, None, trial.basis)
    logger.info('残差 DEIM: %d 项，约化单元 %d / %d', G.size, domain.cells.size, space.mesh.n_cells)
    return HyperReduction('vector', structure, Phi1, G, slots, K[G, :], np.ascontiguousarray(cores), domain,
                          temporal_basis=Phi2, steps=steps)


def hyperreduce_matrix(
    jac_snaps: SnapshotTensor,
    pattern: SparsityPattern,
    trial: AnyProjection,
    test: AnyProjection,
    tol: float,
    space: FESpaceDef
) -> HyperReduction:
    """
    Jacobian 的 MDEIM 超降阶

    Args:
        jac_snaps: 非零值快照，轴 (space_nnz, param) 或 (space_nnz, time, param)
        pattern: 全部快照共享的稀疏模式
        trial / test: 试探与检验投影
        tol: POD 容差
        space: 有限元空间

    Returns:
        HyperReduction；稳态核 Psi^T scatter(Phi_z[:, i]) Phi，
        空间-时间为空间核 C_i1 = Psi_1^T scatter(Phi_z1[:, i1]) Phi_1 与时间权重
        W_i2 = Phi_2^T diag(Phi_z2[:, i2]) Phi_2
    """
    if jac_snaps.axes[0] != 'space_nnz':
        raise ShapeError(f'Jacobian 快照第一轴必须是 space_nnz: {jac_snaps.axes}')
    if jac_snaps.dims[0] != pattern.nnz:
        raise ShapeError(f'快照行数 {jac_snaps.dims[0]} 与 nnz={pattern.nnz} 不符')
    Phi1, Phi2, K, G, slots, steps = _steady_or_space_time(jac_snaps, tol)
    Psi, Phi = test.basis, trial.basis
    cores = np.stack([Psi.T @ (scatter_nnz(pattern, Phi1[:, i]) @ Phi) for i in range(Phi1.shape[1])])
    weights = None
    structure = 'steady'
    if Phi2 is not None:
        T = trial.temporal_basis
        weights = np.stack([T.T @ (Phi2[:, i, None] * T) for i in range(Phi2.shape[1])])
        structure = 'space_time'
    domain = ReducedIntegrationDomain.build(slots, steps, space, pattern, trial.basis)
    logger.info('Jacobian MDEIM: %d 项，约化单元 %d / %d', G.size, domain.cells.size, space.mesh.n_cells)
    return HyperReduction('matrix', structure, Phi1, G, slots, K[G, :], cores, domain,
                          temporal_basis=Phi2, steps=steps, weights=weights)


def online_coefficients(hr: HyperReduction, sampled: np.ndarray) -> np.ndarray:
    """
    解 Phi_z[G, :] c = sampled（LU 已离线分解）

    Args:
        sampled: 插值下标处的值，长度 |G|（或 |G| x k）

    Raises:
        ShapeError: 长度不符
    """
    sampled = np.asarray(sampled, dtype=float)
    if sampled.shape[0] != hr.nterms:
        raise ShapeError(f'采样长度 {sampled.shape[0]} 与仿射项数 {hr.nterms} 不符')
    return la.lu_solve(hr.lu, sampled)


def online_reduced_term(hr: HyperReduction, coefficients: np.ndarray) -> np.ndarray:
    """
    约化项：稳态 sum_i c_i cores_i；空间-时间矩阵 sum c_{i1,i2} Kron(W_i2, C_i1)

    只读取核与权重，不触及任何长度为 N 的数组
    """
    c = np.asarray(coefficients, dtype=float).ravel()
    if c.size != hr.nterms:
        raise ShapeError(f'系数长度 {c.size} 与仿射项数 {hr.nterms} 不符')
    if hr.kind == 'vector' or hr.structure == 'steady':
        return np.tensordot(c, hr.cores, axes=(0, 0))
    C = c.reshape(hr.m1, hr.m2, order='F')
    n1, n2 = hr.cores.shape[1], hr.weights.shape[1]
    out = stats.zeros((n1 * n2, n1 * n2))
    for i2 in range(hr.m2):
        out += np.kron(hr.weights[i2], np.tensordot(C[:, i2], hr.cores, axes=(0, 0)))
    return out
