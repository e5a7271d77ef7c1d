import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from splitfield.measure import Box, TestFunction

settings.register_profile(
    "repo", deadline=None, derandomize=True, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repo"))


@pytest.fixture
def unit1():
    return TestFunction.indicator(Box([0.0], [1.0]))


@pytest.fixture
def unit2():
    return TestFunction.indicator(Box([0.0, 0.0], [1.0, 1.0]))


@pytest.fixture
def gen():
    return np.random.default_rng(20240611)
