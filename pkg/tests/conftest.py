import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "worldlab",
    max_examples=60,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("worldlab")


@pytest.fixture
def rng():
    return np.random.default_rng(0)
