import numpy as np
import pytest

from causalgnn.config import RunConfig
from causalgnn.synthdata import generate, make_windows, preset


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run the long experiment analogues')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: long-running experiment analogue, needs --runslow')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope='session')
def fig6_data():
    return generate(preset('fig6-default'), 2000, seed=0)


@pytest.fixture(scope='session')
def small_windows(fig6_data):
    return make_windows(fig6_data.dataset, local_window=6, oci_window=2, horizon=1, stride=2)


@pytest.fixture
def run_config():
    RunConfig.load()
    yield RunConfig
    RunConfig.load()
