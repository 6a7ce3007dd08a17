import pytest
from perclab.config import SEED_ENV_VAR


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help='run the desk-scale reproductions')


def pytest_configure(config):
    config.addinivalue_line(
        'markers', 'slow: desk-scale reproduction taking minutes')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def no_seed_override(monkeypatch):
    """Keep a seed set in the shell from leaking into the tests."""
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)
