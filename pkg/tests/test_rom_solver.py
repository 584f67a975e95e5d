import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import REACTION_BOX, config_for
from fem.problems import problem_from_config
from params.sampling import Realization, sample_realization
from rom.operator import assemble_single, build_reduced_operator, inner_product_matrix
from rom.solver import dense_solve, online_solve, reconstruct, space_time_system
from snapshots.collect import collect_snapshots, residual_snapshots
from utils.errors import ArgumentError, LinearSolveError, ShapeError
from utils.evaluation import error_measure


def _build(problem_name, **overrides):
    config = config_for(problem_name, **overrides)
    problem = problem_from_config(config)
    return problem, build_reduced_operator(problem, config)


def _rom_error(problem, rbop, nparams=3, seed=1234):
    r = sample_realization(problem.param_space, nparams, 'uniform', seed)
    coords, rom_stats = online_solve(rbop, r)
    fom, _ = collect_snapshots(problem, r)
    rom, _ = reconstruct(rbop, coords, r)
    X = inner_product_matrix(problem.space, rbop.inner_product)
    return error_measure(fom, rom, X), rom_stats


def test_poisson_rom_reproduces_fom_with_tight_tolerance():
    problem, rbop = _build('poisson2d', cells=(3, 3), tol=1e-10)
    assert rbop.inner_product == 'h1_0'
    assert rbop.jacobian.nterms == 2
    error, rom_stats = _rom_error(problem, rbop)
    assert error < 1e-6
    assert rom_stats.iterations == [1, 1, 1]


def test_poisson_rom_accuracy_at_default_tolerance():
    problem, rbop = _build('poisson2d')
    assert rbop.n < problem.space.n_free
    error, _ = _rom_error(problem, rbop, nparams=5)
    assert error < 1e-2


def test_nonlinear_rom_newton():
    problem, rbop = _build('nonlinear_reaction2d', pdomain=REACTION_BOX, tol=1e-6)
    error, rom_stats = _rom_error(problem, rbop)
    assert error <= 1e-3
    assert max(rom_stats.iterations) <= 10
    assert min(rom_stats.iterations) >= 2


def test_heat_space_time_system_matches_projected_block_system():
    problem, rbop = _build('heat2d', tol=1e-10, nparams=4, nparams_res=3, nparams_jac=1)
    assert rbop.transient
    assert rbop.n == rbop.n1 * rbop.n2

    mu = np.array([2.5, 4.0])
    lhs, rhs = space_time_system(rbop, mu)

    # 全阶向后 Euler 块系统，自由自由度，零初值
    space = problem.space
    grid = problem.param_space.time_grid
    nt, dt = problem.param_space.nsteps, problem.param_space.dt
    r = Realization(mu[None, :], grid)
    r0 = residual_snapshots(problem, r).data[:, :, 0]
    M = assemble_single(problem.mass_form(), space, mu, grid[0]).toarray()
    K = assemble_single(problem.jacobian_form(), space, mu, grid[0]).toarray()
    shift = np.eye(nt, k=-1)
    A = np.kron(np.eye(nt) - shift, M) / dt + np.kron(np.eye(nt), K)
    b = -r0.ravel(order='F')

    V = rbop.trial.projection.kron_basis()
    expected_lhs = V.T @ A @ V
    expected_rhs = V.T @ b
    assert_allclose(lhs, expected_lhs, atol=1e-9 * np.abs(expected_lhs).max())
    assert_allclose(rhs, expected_rhs, atol=1e-9 * np.abs(expected_rhs).max())


def test_heat_rom_matches_fom():
    problem, rbop = _build('heat2d', tol=1e-8, nparams=4, nparams_res=3, nparams_jac=1)
    error, rom_stats = _rom_error(problem, rbop, nparams=2)
    assert error < 1e-5
    assert rom_stats.iterations == [1, 1]


def test_online_argument_checks():
    problem, rbop = _build('poisson2d', cells=(3, 3))
    with pytest.raises(ShapeError):
        online_solve(rbop, Realization(np.ones((1, 3))))
    r = sample_realization(problem.param_space, 2, 'uniform', 5)
    with pytest.raises(ShapeError):
        reconstruct(rbop, np.zeros((rbop.n + 1, 2)), r)
    with pytest.raises(ShapeError):
        reconstruct(rbop, np.zeros((rbop.n, 3)), r)


def test_transient_online_requires_matching_time_grid():
    problem, rbop = _build('heat2d', nparams=3, nparams_res=2, nparams_jac=1)
    with pytest.raises(ArgumentError):
        online_solve(rbop, Realization(np.ones((1, 2))))
    with pytest.raises(ArgumentError):
        online_solve(rbop, Realization(np.ones((1, 2)), np.linspace(0.0, 0.1, 3)))


def test_dense_solve_singular():
    with pytest.raises(LinearSolveError) as info:
        dense_solve(np.zeros((2, 2)), np.ones(2), param=3)
    assert info.value.param_index == 3


def test_build_requires_hyper_reduction_snapshots():
    config = config_for('poisson2d', nparams_res=0)
    with pytest.raises(ArgumentError):
        build_reduced_operator(problem_from_config(config), config)
    config = config_for('poisson2d', nparams_jac=0)
    with pytest.raises(ArgumentError):
        build_reduced_operator(problem_from_config(config), config)


def test_petrov_galerkin_test_basis():
    config = config_for('poisson2d', cells=(3, 3), tol=1e-10)
    problem = problem_from_config(config)
    galerkin = build_reduced_operator(problem, config)
    Psi = galerkin.trial.basis * 2.0
    rbop = build_reduced_operator(problem, config, test_basis=Psi)
    assert rbop.petrov_galerkin
    error, _ = _rom_error(problem, rbop)
    assert error < 1e-6
    with pytest.raises(ShapeError):
        build_reduced_operator(problem, config, test_basis=Psi[:, :1].repeat(rbop.n + 1, axis=1))
