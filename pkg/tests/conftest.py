import numpy as np
import pytest


@pytest.fixture()
def rng():
    return np.random.default_rng(20240601)


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: training runs gated by PHDAE_RUN_SLOW')
