"""
Общие фикстуры и профиль hypothesis для тестов Flow Sampling
"""
import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

# корень проекта, чтобы работали импорты вида src.*
project_root = os.path.abspath(os.path.join(os.path.dirname(__file__), '..', '..'))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def s2():
    from src.core.geometry import ManifoldSpec
    return ManifoldSpec.sphere(2)


@pytest.fixture
def h2():
    from src.core.geometry import ManifoldSpec
    return ManifoldSpec.hyperboloid(2)
