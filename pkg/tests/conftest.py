import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("cutkit", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("cutkit")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
