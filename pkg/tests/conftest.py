import numpy as np
import pytest

from cfchain import NetworkConfig, kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # JIT compilation happens once here so timed tests see steady state
    kernels.warmup()


@pytest.fixture
def cfg():
    return NetworkConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
