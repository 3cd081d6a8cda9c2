import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from attitude_bench.models import preset_scenario  # noqa: E402

# first calls compile numba specialisations, which blows any per-example deadline
settings.register_profile("default", deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def case1():
    return preset_scenario("case1_uav")


@pytest.fixture(scope="session")
def case2():
    return preset_scenario("case2_satellite")


@pytest.fixture(scope="session")
def short_case1(case1):
    """Case 1 shortened to 2 s for fast end-to-end checks."""
    return replace(case1, horizon=2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
