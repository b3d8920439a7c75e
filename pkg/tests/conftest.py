import numpy as np
import pytest

from evflow.pipeline import warmup


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # pay JIT compilation once, before anything that measures time
    warmup()


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
