import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from assembly.assembler import assemble_batched
from fem.kernels import ParamFunction, WeakFormKernel, elemental_eval
from fem.mesh import build_mesh_and_space
from params.sampling import ParamBatch
from utils.errors import ArgumentError, EvaluationError

ONE = ParamFunction.constant(1.0, name='one')


def test_q1_vertex_order_is_counter_clockwise():
    mesh, space = build_mesh_and_space((0.0, 1.0, 0.0, 1.0), (2, 2))
    assert mesh.n_cells == 4
    assert mesh.n_vertices == 9
    assert_array_equal(mesh.cell_vertices[0], [0, 1, 4, 3])
    assert_array_equal(mesh.cell_vertices[1], [1, 2, 5, 4])
    assert_allclose(mesh.coords[mesh.cell_vertices[3]], [[0.5, 0.5], [1.0, 0.5], [1.0, 1.0], [0.5, 1.0]])
    assert_array_equal(space.free_dofs, [4])
    assert space.n_dirichlet == 8


def test_no_dirichlet_space_keeps_all_dofs():
    _, space = build_mesh_and_space((0.0, 2.0), (5,), 'none')
    assert space.n_free == 6
    assert space.n_dirichlet == 0


def test_invalid_meshes():
    with pytest.raises(ArgumentError):
        build_mesh_and_space((0.0, 1.0), (0,))
    with pytest.raises(ArgumentError):
        build_mesh_and_space((0.0, 1.0, 0.0, 1.0, 0.0, 1.0), (1, 1, 1))
    with pytest.raises(ArgumentError):
        build_mesh_and_space((1.0, 0.0), (2,))


def test_lift_places_free_and_dirichlet_values(space_3x3):
    free = np.arange(space_3x3.n_free, dtype=float) + 1.0
    full = space_3x3.lift(free, np.full(space_3x3.n_dirichlet, -1.0))
    assert full.shape == (16, 1)
    assert_array_equal(full[space_3x3.free_dofs, 0], free)
    assert np.all(full[space_3x3.dirichlet_dofs, 0] == -1.0)


def test_1d_element_matrices():
    _, space = build_mesh_and_space((0.0, 1.0), (4,), 'none')
    h = 0.25
    batch = ParamBatch(np.zeros((1, 1)))
    K = elemental_eval(WeakFormKernel('stiffness', ONE), batch, space)[0][0]
    assert_allclose(K, np.array([[1.0, -1.0], [-1.0, 1.0]]) / h)
    M = elemental_eval(WeakFormKernel('mass', ONE), batch, space)[2][0]
    assert_allclose(M, np.array([[2.0, 1.0], [1.0, 2.0]]) * h / 6.0)


def test_global_mass_sums_to_area_and_stiffness_kills_constants():
    _, space = build_mesh_and_space((0.0, 2.0, 0.0, 3.0), (3, 4), 'none')
    batch = ParamBatch(np.zeros((1, 1)))
    M = assemble_batched(WeakFormKernel('mass', ONE), batch, space).param(0)
    K = assemble_batched(WeakFormKernel('stiffness', ONE), batch, space).param(0)
    assert M.sum() == pytest.approx(6.0)
    assert_allclose(K @ np.ones(space.n_free), 0.0, atol=1e-12)


def test_load_with_scale():
    _, space = build_mesh_and_space((0.0, 1.0), (2,), 'none')
    f = WeakFormKernel('load', ONE, scale=-1.0)
    r = assemble_batched(f, ParamBatch(np.zeros((1, 1))), space).values[:, 0]
    assert_allclose(r, [-0.25, -0.5, -0.25])


def test_parametric_blocks_are_per_parameter():
    _, space = build_mesh_and_space((0.0, 1.0), (2,), 'none')
    nu = ParamFunction(lambda mu: (lambda x: np.full(x.shape[0], mu[0])), name='nu')
    batch = ParamBatch(np.array([[1.0], [3.0]]))
    blk = elemental_eval(WeakFormKernel('stiffness', nu), batch, space)[0]
    assert len(blk) == 2
    assert_allclose(blk[1], 3.0 * blk[0])


def test_nonlinear_kernel_requires_state(space_3x3):
    kernel = WeakFormKernel('nonlinear_reaction', ONE)
    with pytest.raises(ArgumentError):
        elemental_eval(kernel, ParamBatch(np.zeros((1, 1))), space_3x3, is_matrix=True)


def test_nonlinear_jacobian_is_derivative_of_residual():
    _, space = build_mesh_and_space((0.0, 1.0), (3,), 'none')
    kernel = WeakFormKernel('nonlinear_reaction', ONE)
    batch = ParamBatch(np.zeros((1, 1)))
    u = np.array([[0.3], [-0.2], [0.5], [0.1]])
    J = assemble_batched(kernel, batch, space, state=u, is_matrix=True).param(0).toarray()
    eps = 1e-6
    fd = np.empty((4, 4))
    for k in range(4):
        up, um = u.copy(), u.copy()
        up[k] += eps
        um[k] -= eps
        rp = assemble_batched(kernel, batch, space, state=up, is_matrix=False).values[:, 0]
        rm = assemble_batched(kernel, batch, space, state=um, is_matrix=False).values[:, 0]
        fd[:, k] = (rp - rm) / (2 * eps)
    assert_allclose(J, fd, atol=1e-8)


def test_kernel_validation():
    with pytest.raises(ArgumentError):
        WeakFormKernel('convection', ONE)
    with pytest.raises(ArgumentError):
        WeakFormKernel('mass', ONE, quad_order=1)
    with pytest.raises(ArgumentError):
        WeakFormKernel('mass', ONE, operand='u_tt')


def test_coefficient_failure_reports_cell_and_param(space_3x3):
    bad = ParamFunction(lambda mu: (lambda x: np.log(x[:, 0]) if mu[0] < 0 else 1.0 / 0.0), name='bad')
    cells = elemental_eval(WeakFormKernel('stiffness', bad), ParamBatch(np.array([[1.0], [2.0]])), space_3x3)
    with pytest.raises(EvaluationError) as info:
        cells[5]
    assert info.value.cell == 5
    assert info.value.param == 0
