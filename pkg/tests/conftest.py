import pytest

from libs.fem1d import Mesh1D, ObservationWindow
from libs.forms import AssimConfig


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run the full-size experiments")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def make_config():
    """Builds small configurations, gamma_M = gamma_0 = 1 and T = 0.1 unless given"""
    def _make_config(cells: int = 4, steps: int = 2, gamma_1: float = 0.,
                     gamma_0: float = 1., gamma_m: float = 1., final_time: float = 0.1,
                     a: float = 0.2, **kwargs) -> AssimConfig:
        return AssimConfig(gamma_m, gamma_0, gamma_1, n_steps=steps,
                           final_time=final_time, mesh=Mesh1D(cells),
                           window=ObservationWindow(a), **kwargs)
    return _make_config
