"""测试共用夹具：小网格、内置问题与配置构造"""

from typing import Any, Callable, Dict

import pytest

from fem.mesh import build_mesh_and_space
from fem.problems import ProblemDef, build_problem
from utils.config import RunConfig

UNIT_SQUARE = (0.0, 1.0, 0.0, 1.0)
POISSON_BOX = (1.0, 5.0, 1.0, 5.0)
REACTION_BOX = (0.5, 2.0, 1.0, 2.0)


@pytest.fixture
def space_3x3():
    _, space = build_mesh_and_space(UNIT_SQUARE, (3, 3))
    return space


@pytest.fixture
def space_1d():
    _, space = build_mesh_and_space((0.0, 1.0), (4,))
    return space


@pytest.fixture
def poisson() -> ProblemDef:
    return build_problem('poisson2d', UNIT_SQUARE, (4, 4), POISSON_BOX)


@pytest.fixture
def heat() -> ProblemDef:
    return build_problem('heat2d', UNIT_SQUARE, (4, 4), POISSON_BOX, (0.0, 0.01, 4))


@pytest.fixture
def reaction() -> ProblemDef:
    return build_problem('nonlinear_reaction2d', UNIT_SQUARE, (4, 4), REACTION_BOX)


def config_for(problem: str, cells=(4, 4), pdomain=POISSON_BOX, **overrides) -> RunConfig:
    data: Dict[str, Any] = {
        'problem': problem,
        'domain': list(UNIT_SQUARE),
        'cells': list(cells),
        'pdomain': list(pdomain),
        'tol': 1e-4,
        'nparams': 8,
        'nparams_res': 8,
        'nparams_jac': 8,
    }
    if problem == 'heat2d':
        data['tdomain'] = {'t0': 0.0, 'dt': 0.01, 'nsteps': 4}
    data.update(overrides)
    return RunConfig.from_dict(data)


@pytest.fixture
def make_config() -> Callable[..., RunConfig]:
    return config_for
