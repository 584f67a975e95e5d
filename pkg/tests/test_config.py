import json
from pathlib import Path

import pytest

from fem.problems import problem_from_config
from utils.config import RunConfig, load_config
from utils.errors import ConfigurationError

CONFIG_DIR = Path(__file__).parent.parent / 'configs'

BASE = {
    'problem': 'poisson2d',
    'domain': [0.0, 1.0, 0.0, 1.0],
    'cells': [4, 4],
    'pdomain': [1.0, 5.0, 1.0, 5.0],
}


@pytest.mark.parametrize('name', ['poisson2d', 'heat2d', 'nonlinear_reaction2d'])
def test_shipped_configs_load(name):
    config = load_config(CONFIG_DIR / f'{name}.json')
    assert config.problem == name
    problem = problem_from_config(config)
    assert problem.name == name
    assert problem.transient == (name == 'heat2d')


def test_heat_config_values():
    config = load_config(CONFIG_DIR / 'heat2d.json')
    assert config.tdomain_tuple == (0.0, 0.01, 10)
    assert config.theta == 1.0
    assert config.nparams_jac == 1
    assert config.online_seed != config.seed


def test_defaults():
    config = RunConfig.from_dict(BASE)
    assert config.cells == (4, 4)
    assert config.sampling == 'halton'
    assert config.tdomain is None
    assert config.inner_product is None


@pytest.mark.parametrize('change', [
    {'unknown_key': 1},
    {'theta': 0.0},
    {'theta': 1.5},
    {'tol': 1.0},
    {'sampling': 'sobol'},
    {'online_sampling': 'grid'},
    {'inner_product': 'h2'},
    {'nparams': 0},
    {'nparams_res': -1},
    {'cells': [4]},
    {'cells': [4.5, 4]},
    {'domain': [0.0, 1.0, 0.0]},
    {'pdomain': [1.0, 5.0, 1.0]},
    {'tdomain': {'t0': 0.0, 'dt': 0.1}},
    {'tdomain': {'t0': 0.0, 'dt': -0.1, 'nsteps': 3}},
    {'max_iter': True},
    {'newton_tol': 0.0},
])
def test_invalid_values(change):
    data = dict(BASE, **change)
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict(data)


@pytest.mark.parametrize('key', ['problem', 'domain', 'cells', 'pdomain'])
def test_missing_required_key(key):
    data = {k: v for k, v in BASE.items() if k != key}
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict(data)


def test_file_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / 'missing.json')
    broken = tmp_path / 'broken.json'
    broken.write_text('{"problem": ', encoding='utf-8')
    with pytest.raises(ConfigurationError):
        load_config(broken)
    not_object = tmp_path / 'list.json'
    not_object.write_text('[1, 2]', encoding='utf-8')
    with pytest.raises(ConfigurationError):
        load_config(not_object)


def test_roundtrip_through_json(tmp_path):
    config = RunConfig.from_dict(dict(BASE, tdomain={'t0': 0.0, 'dt': 0.05, 'nsteps': 4}, problem='heat2d'))
    path = tmp_path / 'c.json'
    path.write_text(json.dumps(config.to_dict()), encoding='utf-8')
    assert load_config(path) == config
    assert config.replace(tol=1e-3).tol == 1e-3
