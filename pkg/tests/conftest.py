from dataclasses import replace

import pytest

from services.experiment_service import ExperimentConfig
from services.qlearning_service import Hyperparams
from services.world_service import Arena, BoxShape, Environment, Goal


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="lancer les tests statistiques lents")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="test lent : utiliser --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def params():
    return Hyperparams()


@pytest.fixture
def empty_env():
    return Environment(Arena(), BoxShape(), Goal(), ())


@pytest.fixture
def default_config():
    return ExperimentConfig()


@pytest.fixture
def fast_config():
    return replace(ExperimentConfig(), n_episodes=3, max_iterations=40)


@pytest.fixture
def write_config(tmp_path):
    def _write(text, name="boxpush.cfg"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)
    return _write
