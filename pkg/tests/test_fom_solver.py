import numpy as np
import pytest
import scipy.sparse as sp
from numpy.testing import assert_allclose

from assembly.assembler import assemble_batched
from fem.kernels import ParamFunction, WeakFormKernel
from fem.mesh import build_mesh_and_space
from fem.problems import ProblemDef, build_problem, heat_exact
from fem.solver import fom_solve_steady, fom_solve_transient, interpolate_dirichlet, lu_solve
from params.sampling import ParamSpace, Realization, TransientParamSpace, sample_realization
from utils.errors import ArgumentError, ConfigurationError, ConvergenceError, LinearSolveError

ONE = ParamFunction.constant(1.0, name='one')


def _patch_problem(cells):
    _, space = build_mesh_and_space((0.0, 1.0, 0.0, 1.0), cells)
    g = ParamFunction(lambda mu: (lambda x: 1.0 + mu[0] * x[:, 0] + mu[1] * x[:, 1]), name='g')
    return ProblemDef(
        name='patch',
        space=space,
        param_space=ParamSpace.from_flat((1.0, 2.0, -1.0, 1.0)),
        stiffness=WeakFormKernel('stiffness', ONE),
        dirichlet=g,
    )


@pytest.mark.parametrize('cells', [(2, 2), (3, 2), (5, 5)])
def test_q1_patch_test_is_exact(cells):
    problem = _patch_problem(cells)
    r = sample_realization(problem.param_space, 3, 'uniform', seed=2)
    w, run_stats = fom_solve_steady(problem, r)
    x = problem.space.mesh.coords[problem.space.free_dofs]
    for j, mu in enumerate(r.params):
        assert_allclose(w.values[:, j], 1.0 + mu[0] * x[:, 0] + mu[1] * x[:, 1], atol=1e-12)
    assert run_stats.iterations == [1, 1, 1]
    assert run_stats.nparams == 3


def test_nonlinear_newton_drives_residual_to_zero(reaction):
    r = sample_realization(reaction.param_space, 3, 'halton')
    w, run_stats = fom_solve_steady(reaction, r, eps=1e-12)
    gD = interpolate_dirichlet(reaction.dirichlet, r, reaction.space)
    state = reaction.space.lift(w.values, gD)
    res = assemble_batched(reaction.residual_form(), r, reaction.space, state=state)
    assert np.abs(res.values).max() < 1e-10
    assert max(run_stats.iterations) <= 10
    assert min(run_stats.iterations) >= 2


def test_nonlinear_newton_reports_nonconvergence(reaction):
    r = sample_realization(reaction.param_space, 2, 'halton')
    with pytest.raises(ConvergenceError) as info:
        fom_solve_steady(reaction, r, eps=1e-14, max_iter=1)
    assert info.value.param_index in (0, 1)
    assert len(info.value.history) == 1


def test_singular_system_raises():
    with pytest.raises(LinearSolveError):
        lu_solve(sp.csc_matrix(np.zeros((2, 2))), np.ones(2), param=4)


def test_steady_solver_rejects_transient_problem(heat):
    r = sample_realization(heat.param_space, 1)
    with pytest.raises(ArgumentError):
        fom_solve_steady(heat, r)


def _decay_problem(nsteps):
    # u(x, t) = mu e^{-t} (1 + x)：空间线性，Q1 精确，只剩时间误差
    _, space = build_mesh_and_space((0.0, 1.0), (4,))
    exact = ParamFunction(lambda mu, t: (lambda x: mu[0] * np.exp(-t) * (1.0 + x[:, 0])), transient=True)
    return ProblemDef(
        name='decay1d',
        space=space,
        param_space=TransientParamSpace.from_range((1.0, 2.0), 0.0, 1.0 / nsteps, nsteps),
        stiffness=WeakFormKernel('stiffness', ONE),
        mass=WeakFormKernel('mass', ONE),
        load=WeakFormKernel('load', ParamFunction(
            lambda mu, t: (lambda x: -mu[0] * np.exp(-t) * (1.0 + x[:, 0])), transient=True)),
        dirichlet=exact,
        initial_condition=ParamFunction(lambda mu: (lambda x: mu[0] * (1.0 + x[:, 0]))),
    )


def _final_error(nsteps, theta):
    problem = _decay_problem(nsteps)
    r = Realization(np.array([[1.5]]), problem.param_space.time_grid)
    U, _ = fom_solve_transient(problem, r, theta=theta)
    x = problem.space.mesh.coords[problem.space.free_dofs, 0]
    return np.abs(U.data[:, -1, 0] - 1.5 * np.exp(-1.0) * (1.0 + x)).max()


@pytest.mark.parametrize('theta, order', [(1.0, 1.0), (0.5, 2.0)])
def test_theta_method_convergence_order(theta, order):
    errors = [_final_error(n, theta) for n in (10, 20, 40)]
    slopes = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(np.abs(slopes - order) <= 0.15 * order)


def test_transient_snapshot_layout(heat):
    r = sample_realization(heat.param_space, 2, 'halton')
    U, run_stats = fom_solve_transient(heat, r)
    assert U.axes == ('space', 'time', 'param')
    assert U.dims == (heat.space.n_free, 4, 2)
    assert run_stats.nparams == 2


HEAT_BOX = (1.0, 5.0, 1.0, 5.0)


def _heat_error(n):
    problem = build_problem('heat2d', (0.0, 1.0, 0.0, 1.0), (n, n), HEAT_BOX, (0.0, 0.01, 10))
    r = Realization(np.array([[3.0, 4.0]]), problem.param_space.time_grid)
    U, _ = fom_solve_transient(problem, r)
    x = problem.space.mesh.coords[problem.space.free_dofs]
    exact = heat_exact(r.params[0], 0.1)(x)
    return np.abs(U.data[:, -1, 0] - exact).max() / np.abs(exact).max()


def test_heat_converges_to_manufactured_solution_under_refinement():
    # 解对 t 线性，向后 Euler 无时间误差，只剩空间误差
    errors = [_heat_error(n) for n in (4, 8, 16)]
    assert errors[1] < 0.35 * errors[0]
    assert errors[2] < 0.35 * errors[1]
    assert errors[2] < 2e-3


def _sine(x):
    return np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])


def _sine_problem(n):
    # -mu_1 Laplace(u) = f，u = sin(pi x_1) sin(pi x_2)，边界为零
    _, space = build_mesh_and_space((0.0, 1.0, 0.0, 1.0), (n, n))
    return ProblemDef(
        name='sine2d',
        space=space,
        param_space=ParamSpace.from_flat((1.0, 5.0)),
        stiffness=WeakFormKernel('stiffness', ParamFunction(lambda mu: (lambda x: np.full(x.shape[0], mu[0])))),
        load=WeakFormKernel('load', ParamFunction(lambda mu: (lambda x: 2.0 * np.pi ** 2 * mu[0] * _sine(x)))),
        dirichlet=ParamFunction(lambda mu: (lambda x: np.zeros(x.shape[0]))),
    )


def test_steady_converges_to_manufactured_solution_under_refinement():
    errors = []
    for n in (4, 8, 16):
        problem = _sine_problem(n)
        w, _ = fom_solve_steady(problem, Realization(np.array([[2.0]])))
        exact = _sine(problem.space.mesh.coords[problem.space.free_dofs])
        errors.append(np.abs(w.values[:, 0] - exact).max() / np.abs(exact).max())
    assert errors[1] < 0.35 * errors[0]
    assert errors[2] < 0.35 * errors[1]
    assert errors[2] < 1e-2


def _poisson_nodal(n, mu):
    # 区域取 [1,2]^2，使扩散系数 mu_1 x_1 + mu_2 x_2 一致正定
    problem = build_problem('poisson2d', (1.0, 2.0, 1.0, 2.0), (n, n), HEAT_BOX)
    r = Realization(mu[None, :])
    w, _ = fom_solve_steady(problem, r)
    full = problem.space.lift(w.values, interpolate_dirichlet(problem.dirichlet, r, problem.space))[:, 0]
    return full.reshape((n + 1, n + 1))


def test_poisson2d_self_convergence():
    mu = np.array([2.0, 3.5])
    reference = _poisson_nodal(32, mu)
    errors = []
    for n in (4, 8, 16):
        stride = 32 // n
        errors.append(np.abs(_poisson_nodal(n, mu) - reference[::stride, ::stride]).max())
    assert errors[1] < 0.35 * errors[0]
    assert errors[2] < 0.35 * errors[1]


def test_newton_requires_positive_iteration_budget(reaction):
    r = sample_realization(reaction.param_space, 1, 'halton')
    with pytest.raises(ArgumentError):
        fom_solve_steady(reaction, r, max_iter=0)


def test_transient_argument_checks(heat, poisson):
    r = sample_realization(heat.param_space, 1)
    with pytest.raises(ArgumentError):
        fom_solve_transient(heat, r, theta=0.0)
    with pytest.raises(ArgumentError):
        fom_solve_transient(poisson, sample_realization(poisson.param_space, 1))
    with pytest.raises(ArgumentError):
        fom_solve_transient(heat, Realization(np.ones((1, 2))))


def test_unknown_problem():
    with pytest.raises(ConfigurationError):
        build_problem('navier_stokes', (0.0, 1.0, 0.0, 1.0), (2, 2), (0.0, 1.0))
    with pytest.raises(ConfigurationError):
        build_problem('heat2d', (0.0, 1.0, 0.0, 1.0), (2, 2), (0.0, 1.0, 0.0, 1.0))
