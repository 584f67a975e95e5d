import numpy as np
import pytest
import scipy.sparse as sp
from numpy.testing import assert_allclose, assert_array_equal

from assembly.assembler import assemble_batched, assemble_naive_reference, check_same_pattern
from assembly.bench import BENCH_COLUMNS, bench_assembly, bench_coefficient
from assembly.param_arrays import (
    PATTERN_BUILDS,
    BatchedSparseCSC,
    SparsityPattern,
    nonzeros,
    scatter_nnz,
)
from fem.kernels import ParamFunction, WeakFormKernel
from fem.mesh import build_mesh_and_space
from params.sampling import ParamSpace, sample_realization
from utils.errors import ArgumentError, AssemblyError, SparsityConsistencyError
from utils.stats import measure

NU = bench_coefficient()
BOX = ParamSpace.from_flat((1.0, 5.0, 1.0, 5.0))

KERNELS = {
    'stiffness': (WeakFormKernel('stiffness', NU), True),
    'mass': (WeakFormKernel('mass', NU), True),
    'load': (WeakFormKernel('load', NU, scale=-1.0), False),
    'reaction_matrix': (WeakFormKernel('nonlinear_reaction', NU), True),
    'reaction_vector': (WeakFormKernel('nonlinear_reaction', NU), False),
}

MESHES = {
    '1d': ((0.0, 1.0), (6,)),
    '2d': ((0.0, 2.0, 0.0, 1.0), (4, 3)),
}


def _setup(mesh_key, P, seed=0):
    domain, cells = MESHES[mesh_key]
    _, space = build_mesh_and_space(domain, cells)
    if space.mesh.dim == 1:
        nu = ParamFunction(lambda mu: (lambda x: mu[0] + mu[1] * x[:, 0]), name='nu1d')
    else:
        nu = NU
    r = sample_realization(BOX, P, 'uniform', seed)
    state = np.random.default_rng(seed).normal(size=(space.n_dofs, P))
    return space, nu, r, state


@pytest.mark.parametrize('P', [1, 2, 4])
@pytest.mark.parametrize('mesh_key', sorted(MESHES))
@pytest.mark.parametrize('name', sorted(KERNELS))
def test_batched_matches_naive(name, mesh_key, P):
    space, nu, r, state = _setup(mesh_key, P)
    base, matrix = KERNELS[name]
    kernel = WeakFormKernel(base.kind, nu, scale=base.scale)
    st = state if kernel.needs_state else None
    batched = assemble_batched(kernel, r, space, state=st, is_matrix=matrix)
    naive = assemble_naive_reference(kernel, r, space, state=st, is_matrix=matrix)
    if matrix:
        assert isinstance(batched, BatchedSparseCSC)
        assert batched.data.shape == (P, batched.nnz)
        scale = np.abs(naive.data).max()
        assert_allclose(batched.data, naive.data, rtol=1e-13, atol=1e-13 * scale)
    else:
        assert batched.values.shape == (space.n_free, P)
        scale = np.abs(naive.values).max()
        assert_allclose(batched.values, naive.values, rtol=1e-13, atol=1e-13 * scale)


def test_batched_columns_match_single_parameter_assembly():
    space, nu, r, _ = _setup('2d', 3)
    kernel = WeakFormKernel('stiffness', nu)
    batched = assemble_batched(kernel, r, space)
    for j in range(3):
        single = assemble_batched(kernel, r.select([j]), space)
        assert_allclose(batched.param(j).toarray(), single.param(0).toarray(), rtol=1e-13)


def _alloc(assemble, kernels, space, P):
    r = sample_realization(BOX, P, 'uniform', 0)
    with measure() as m:
        for kernel in kernels:
            assemble(kernel, r, space)
    return m.alloc_bytes


def test_allocations_affine_in_parameter_count():
    _, space = build_mesh_and_space((0.0, 2.0, 0.0, 2.0), (5, 5))
    kernels = (WeakFormKernel('stiffness', NU), WeakFormKernel('load', NU))
    SparsityPattern.for_space(space)
    counts = [1, 2, 4]
    batched = [_alloc(assemble_batched, kernels, space, P) for P in counts]
    naive = [_alloc(assemble_naive_reference, kernels, space, P) for P in counts]
    slope = batched[1] - batched[0]
    assert slope > 0
    # 两点斜率外推第三点
    assert batched[2] == batched[0] + slope * 3
    assert batched[0] - slope == 0
    for P, b, n in zip(counts, batched, naive):
        assert n == b + P * batched[0]
        if P >= 2:
            assert b <= n


def test_pattern_built_once_per_space():
    _, space = build_mesh_and_space((0.0, 1.0, 0.0, 1.0), (3, 3))
    before = PATTERN_BUILDS['count']
    r = sample_realization(BOX, 2)
    for _ in range(3):
        assemble_batched(WeakFormKernel('stiffness', NU), r, space)
    assert PATTERN_BUILDS['count'] == before + 1


def test_scatter_nnz_oracle():
    pattern = SparsityPattern(3, 3, np.array([0, 2, 5, 7]), np.array([0, 1, 0, 1, 2, 1, 2]))
    A = scatter_nnz(pattern, np.arange(1.0, 8.0))
    assert_array_equal(A.toarray(), [[1, 3, 0], [2, 4, 6], [0, 5, 7]])
    assert_array_equal(nonzeros(A, pattern), np.arange(1.0, 8.0))
    with pytest.raises(ArgumentError):
        scatter_nnz(pattern, np.ones(6))


def test_nonzeros_drops_entries_outside_pattern():
    pattern = SparsityPattern(2, 2, np.array([0, 1, 2]), np.array([0, 1]))
    full = sp.csc_matrix(np.array([[1.0, 9.0], [9.0, 2.0]]))
    assert_array_equal(nonzeros(full, pattern), [1.0, 2.0])


def test_cell_partition_sums_to_full_assembly():
    space, nu, r, _ = _setup('2d', 2)
    kernel = WeakFormKernel('stiffness', nu)
    full = assemble_batched(kernel, r, space)
    cells = np.arange(space.mesh.n_cells)
    left = assemble_batched(kernel, r, space, cells=cells[::2])
    right = assemble_batched(kernel, r, space, cells=cells[1::2])
    assert_allclose(left.data + right.data, full.data, rtol=1e-13, atol=1e-14)

    load = WeakFormKernel('load', nu)
    empty = assemble_batched(load, r, space, cells=[])
    assert np.all(empty.values == 0.0)


def test_out_of_range_cells():
    space, nu, r, _ = _setup('2d', 1)
    with pytest.raises(AssemblyError):
        assemble_batched(WeakFormKernel('mass', nu), r, space, cells=[0, space.mesh.n_cells])


def test_preallocated_output_is_reset():
    space, nu, r, _ = _setup('2d', 2)
    kernel = WeakFormKernel('mass', nu)
    expected = assemble_batched(kernel, r, space)
    out = BatchedSparseCSC(expected.pattern, np.full_like(expected.data, 7.0))
    result = assemble_batched(kernel, r, space, out=out)
    assert result is out
    assert_allclose(out.data, expected.data)


def test_check_same_pattern():
    _, a = build_mesh_and_space((0.0, 1.0), (4,))
    _, b = build_mesh_and_space((0.0, 1.0), (5,))
    r = sample_realization(BOX, 1)
    kernel = WeakFormKernel('stiffness', ParamFunction.constant(1.0))
    Ja = assemble_batched(kernel, r, a)
    Ja2 = assemble_batched(kernel, r, a)
    Jb = assemble_batched(kernel, r, b)
    assert check_same_pattern([Ja, Ja2]) is Ja.pattern
    with pytest.raises(SparsityConsistencyError):
        check_same_pattern([Ja, Jb])
    with pytest.raises(ArgumentError):
        check_same_pattern([])


def test_bench_assembly_table():
    df = bench_assembly([2], [1, 2], repetitions=1)
    assert list(df.columns) == BENCH_COLUMNS
    assert len(df) == 8
    assert set(df['path']) == {'batched', 'naive', 'batched_excl', 'naive_excl'}
    assert (df['wall_ns'] > 0).all()
    excl = df[df['path'] == 'batched_excl'].set_index('P')['alloc_bytes']
    full = df[df['path'] == 'batched'].set_index('P')['alloc_bytes']
    assert (excl < full).all()
    with pytest.raises(ArgumentError):
        bench_assembly([], [1])
