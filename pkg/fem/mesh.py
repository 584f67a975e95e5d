"""
网格与有限元空间模块

笛卡尔网格（1D 线段 / 2D 四边形）与一阶 Lagrange 空间（1D 为 P1，2D 为 Q1），
自由度即网格顶点
"""

from dataclasses import dataclass, field
from typing import Dict, Sequence, Tuple

import numpy as np

from utils import stats
from utils.errors import ArgumentError

DIRICHLET_TAGS = ('none', 'boundary')


@dataclass(frozen=True, eq=False)
class CartesianMesh:
    """
    结构化笛卡尔网格

    顶点按字典序编号，第一轴变化最快；单元同样第一轴最快。
    2D 单元内局部顶点逆时针排列: (0,0), (1,0), (1,1), (0,1)

    Attributes:
        domain: 形状 (dim, 2) 的区域边界
        cells: 每个轴上的单元数
    """

    domain: np.ndarray
    cells: Tuple[int, ...]
    coords: np.ndarray = field(init=False, repr=False)
    cell_vertices: np.ndarray = field(init=False, repr=False)
    cell_origins: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        domain = np.asarray(self.domain, dtype=float).reshape(-1, 2)
        cells = tuple(int(c) for c in self.cells)
        if domain.shape[0] not in (1, 2) or len(cells) != domain.shape[0]:
            raise ArgumentError(f'仅支持 1D/2D 网格: domain={domain.tolist()}, cells={cells}')
        if any(c < 1 for c in cells):
            raise ArgumentError(f'每个轴上的单元数必须 >= 1: {cells}')
        if np.any(domain[:, 0] >= domain[:, 1]):
            raise ArgumentError(f'区域边界必须满足 lo < hi: {domain.tolist()}')
        object.__setattr__(self, 'domain', domain)
        object.__setattr__(self, 'cells', cells)

        axes = [np.linspace(domain[d, 0], domain[d, 1], cells[d] + 1) for d in range(len(cells))]
        if len(cells) == 1:
            coords = axes[0].reshape(-1, 1)
            k = np.arange(cells[0])
            cell_vertices = np.stack([k, k + 1], axis=1)
            origins = axes[0][:-1].reshape(-1, 1)
        else:
            nx, ny = cells
            xx, yy = np.meshgrid(axes[0], axes[1], indexing='xy')
            coords = np.stack([xx.ravel(), yy.ravel()], axis=1)
            i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing='xy')
            i, j = i.ravel(), j.ravel()
            v00 = i + (nx + 1) * j
            cell_vertices = np.stack([v00, v00 + 1, v00 + nx + 2, v00 + nx + 1], axis=1)
            origins = np.stack([axes[0][i], axes[1][j]], axis=1)
        object.__setattr__(self, 'coords', coords)
        object.__setattr__(self, 'cell_vertices', cell_vertices.astype(np.int64))
        object.__setattr__(self, 'cell_origins', origins)

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells))

    @property
    def n_vertices(self) -> int:
        return int(np.prod([c + 1 for c in self.cells]))

    @property
    def cell_size(self) -> np.ndarray:
        return (self.domain[:, 1] - self.domain[:, 0]) / np.asarray(self.cells)

    def boundary_vertices(self) -> np.ndarray:
        """位于区域边界上的顶点编号（升序）"""
        index = np.arange(self.n_vertices)
        on_boundary = np.zeros(self.n_vertices, dtype=bool)
        stride = 1
        for c in self.cells:
            local = (index // stride) % (c + 1)
            on_boundary |= (local == 0) | (local == c)
            stride *= c + 1
        return index[on_boundary]


@dataclass(frozen=True, eq=False)
class FESpaceDef:
    """
    一阶标量 Lagrange 空间

    Attributes:
        mesh: 网格
        dirichlet_tag: 'none' 或 'boundary'
        free_dofs: 自由自由度（升序）
        dirichlet_dofs: Dirichlet 自由度（升序）
        cell_dofs: 每个单元的全局自由度编号
        dof_to_free: 全局自由度 → 自由编号（Dirichlet 为 -1）
        dof_to_dirichlet: 全局自由度 → Dirichlet 编号（自由为 -1）
    """

    mesh: CartesianMesh
    dirichlet_tag: str = 'boundary'
    order: int = 1
    free_dofs: np.ndarray = field(init=False, repr=False)
    dirichlet_dofs: np.ndarray = field(init=False, repr=False)
    dof_to_free: np.ndarray = field(init=False, repr=False)
    dof_to_dirichlet: np.ndarray = field(init=False, repr=False)
    cache: Dict[str, object] = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self) -> None:
        if self.dirichlet_tag not in DIRICHLET_TAGS:
            raise ArgumentError(f'未知 Dirichlet 标签: {self.dirichlet_tag}')
        if self.order != 1:
            raise ArgumentError('仅支持一阶单元')
        n = self.mesh.n_vertices
        if self.dirichlet_tag == 'boundary':
            dirichlet = self.mesh.boundary_vertices()
        else:
            dirichlet = np.zeros(0, dtype=np.int64)
        mask = np.zeros(n, dtype=bool)
        mask[dirichlet] = True
        free = np.flatnonzero(~mask)
        dof_to_free = np.full(n, -1, dtype=np.int64)
        dof_to_free[free] = np.arange(free.size)
        dof_to_dirichlet = np.full(n, -1, dtype=np.int64)
        dof_to_dirichlet[dirichlet] = np.arange(dirichlet.size)
        object.__setattr__(self, 'free_dofs', free.astype(np.int64))
        object.__setattr__(self, 'dirichlet_dofs', np.asarray(dirichlet, dtype=np.int64))
        object.__setattr__(self, 'dof_to_free', dof_to_free)
        object.__setattr__(self, 'dof_to_dirichlet', dof_to_dirichlet)

    @property
    def cell_dofs(self) -> np.ndarray:
        return self.mesh.cell_vertices

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_vertices

    @property
    def n_free(self) -> int:
        return int(self.free_dofs.size)

    @property
    def n_dirichlet(self) -> int:
        return int(self.dirichlet_dofs.size)

    @property
    def dofs_per_cell(self) -> int:
        return self.cell_dofs.shape[1]

    def lift(self, free_values: np.ndarray, dirichlet_values: np.ndarray) -> np.ndarray:
        """
        由自由值与 Dirichlet 值拼出全局自由度数组

        Args:
            free_values: (n_free, P)
            dirichlet_values: (n_dirichlet, P)

        Returns:
            (n_dofs, P)
        """
        free_values = np.asarray(free_values, dtype=float).reshape(self.n_free, -1)
        dirichlet_values = np.asarray(dirichlet_values, dtype=float).reshape(self.n_dirichlet, -1)
        nb = max(free_values.shape[1], dirichlet_values.shape[1])
        full = stats.zeros((self.n_dofs, nb))
        full[self.free_dofs] = free_values
        full[self.dirichlet_dofs] = dirichlet_values
        return full


def build_mesh_and_space(
    domain: Sequence[float],
    cells: Sequence[int],
    dirichlet_tag: str = 'boundary'
) -> Tuple[CartesianMesh, FESpaceDef]:
    """
    构造笛卡尔网格与一阶有限元空间

    Args:
        domain: 扁平边界 (x0, x1[, y0, y1])
        cells: 每个轴上的单元数
        dirichlet_tag: 'boundary' 时边界顶点为 Dirichlet 自由度

    Returns:
        (CartesianMesh, FESpaceDef)

    Raises:
        ArgumentError: 单元数为 0 或维度不支持
    """
    mesh = CartesianMesh(np.asarray(domain, dtype=float).reshape(-1, 2), tuple(cells))
    return mesh, FESpaceDef(mesh, dirichlet_tag)
