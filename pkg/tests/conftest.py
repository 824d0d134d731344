import numpy as np
import pytest
from hypothesis import HealthCheck, settings

# jitted kernels make first calls slow; wall-clock deadlines would be noise
settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
