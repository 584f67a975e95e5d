import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from fem.solver import fom_solve_steady
from params.sampling import sample_realization
from snapshots.collect import collect_snapshots, jacobian_snapshots, residual_snapshots
from snapshots.io import MAGIC, decode_tensor, encode_tensor, load_snapshots, save_snapshots
from snapshots.tensor import (
    RealizationEcho,
    SnapshotTensor,
    contract_space,
    inverse_mode_reshape,
    mode_reshape,
)
from utils.errors import ArgumentError, CorruptionError, FormatError, ShapeError


def _tensor(n=3, nt=4, npar=2, axes=('space', 'time', 'param')):
    data = np.arange(n * nt * npar, dtype=float).reshape(n, nt, npar)
    return SnapshotTensor(data, axes, RealizationEcho(7, 'halton', np.array([[1.0, 5.0], [1.0, 5.0]])))


def test_axis_validation():
    with pytest.raises(ShapeError):
        SnapshotTensor(np.zeros((2, 2)), ('space',))
    with pytest.raises(ShapeError):
        SnapshotTensor(np.zeros((2, 2)), ('space', 'frequency'))
    with pytest.raises(ShapeError):
        SnapshotTensor(np.zeros((2, 2)), ('space', 'space'))
    with pytest.raises(ShapeError):
        mode_reshape(SnapshotTensor(np.zeros((2, 2, 2)), ('reduced', 'time', 'param')), 1)
    with pytest.raises(ArgumentError):
        mode_reshape(_tensor(), 3)


def test_mode1_columns_are_time_fastest():
    S = _tensor()
    M1 = mode_reshape(S, 1)
    assert M1.shape == (3, 8)
    for n in range(4):
        for j in range(2):
            assert_array_equal(M1[:, n + 4 * j], S.data[:, n, j])


def test_mode2_index_layout():
    S = _tensor(axes=('reduced', 'time', 'param'))
    M2 = mode_reshape(S, 2)
    assert M2.shape == (4, 6)
    for i1 in range(3):
        for t in range(4):
            for j in range(2):
                assert M2[t, i1 + 3 * j] == S.data[i1, t, j]


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 5), nt=st.integers(1, 5), npar=st.integers(1, 4), mode=st.sampled_from([1, 2]))
def test_inverse_mode_reshape_recovers_tensor(n, nt, npar, mode):
    axes = ('space', 'time', 'param') if mode == 1 else ('reduced', 'time', 'param')
    S = _tensor(n, nt, npar, axes)
    back = inverse_mode_reshape(mode_reshape(S, mode), mode, S.dims, axes, S.echo)
    assert back.equals(S)


def test_inverse_mode_reshape_checks_shape():
    with pytest.raises(ShapeError):
        inverse_mode_reshape(np.zeros((3, 5)), 1, (3, 2, 2), ('space', 'time', 'param'))


def test_contract_space():
    S = _tensor()
    A = np.random.default_rng(0).normal(size=(2, 3))
    C = contract_space(S, A)
    assert C.axes == ('reduced', 'time', 'param')
    assert C.dims == (2, 4, 2)
    assert_allclose(C.data[:, 1, 1], A @ S.data[:, 1, 1])
    with pytest.raises(ShapeError):
        contract_space(S, np.zeros((2, 4)))


def test_param_and_select():
    S = _tensor()
    assert S.nparams == 2
    assert S.nsteps == 4
    assert_array_equal(S.param(1), S.data[:, :, 1])
    assert S.select([1]).dims == (3, 4, 1)


def test_rbsn_header_and_roundtrip(tmp_path):
    S = _tensor()
    raw = encode_tensor(S)
    assert raw[:4] == MAGIC
    assert len(raw) == 4 + 5 + 3 * 9 + 13 + 2 * 16 + 8 * S.data.size
    path = tmp_path / 'u.rbsn'
    save_snapshots(S, path)
    assert load_snapshots(path).equals(S)


def test_rbsn_without_echo(tmp_path):
    S = SnapshotTensor(np.ones(5), ('space',))
    path = tmp_path / 'v.rbsn'
    save_snapshots(S, path)
    back = load_snapshots(path)
    assert back.equals(S)
    assert back.echo.strategy is None


def test_rbsn_rejects_bad_files(tmp_path):
    raw = encode_tensor(_tensor())
    with pytest.raises(FormatError):
        decode_tensor(io.BytesIO(b'NOPE' + raw[4:]))
    with pytest.raises(CorruptionError):
        decode_tensor(io.BytesIO(raw[:-3]))
    path = tmp_path / 'trailing.rbsn'
    path.write_bytes(raw + b'\x00')
    with pytest.raises(CorruptionError):
        load_snapshots(path)
    with pytest.raises(FileNotFoundError):
        load_snapshots(tmp_path / 'missing.rbsn')


def test_steady_snapshots(poisson):
    r = sample_realization(poisson.param_space, 3, 'halton')
    U, run_stats = collect_snapshots(poisson, r)
    w, _ = fom_solve_steady(poisson, r)
    assert U.axes == ('space', 'param')
    assert_array_equal(U.data, w.values)
    assert U.echo.strategy == 'halton'
    assert run_stats.nparams == 3


def test_linear_hyper_snapshots_use_one_iterate_per_param(poisson):
    r = sample_realization(poisson.param_space, 3, 'halton')
    R = residual_snapshots(poisson, r)
    J, pattern = jacobian_snapshots(poisson, r)
    assert R.dims == (poisson.space.n_free, 3)
    assert J.axes == ('space_nnz', 'param')
    assert J.dims == (pattern.nnz, 3)


def test_nonlinear_snapshots_cover_every_newton_iterate(reaction):
    r = sample_realization(reaction.param_space, 2, 'halton')
    _, run_stats = collect_snapshots(reaction, r)
    R = residual_snapshots(reaction, r)
    J, _ = jacobian_snapshots(reaction, r)
    assert R.nparams == sum(run_stats.iterations)
    assert J.nparams == sum(run_stats.iterations)


def test_transient_hyper_snapshots(heat):
    r = sample_realization(heat.param_space, 2, 'halton')
    R = residual_snapshots(heat, r)
    J, pattern = jacobian_snapshots(heat, r)
    assert R.dims == (heat.space.n_free, 4, 2)
    assert J.dims == (pattern.nnz, 4, 2)
    # 热方程刚度与参数和时间无关
    assert_allclose(J.data[:, 0, 0], J.data[:, 3, 1])
