from pathlib import Path

import pytest

from dynlab.config import RunConfig
from dynlab.families import logistic
from dynlab.orbit_engine import OrbitContext

# Parameter slightly above the period-doubling accumulation point
FEIGENBAUM_A = 3.569945672


@pytest.fixture
def ulam():
    return logistic(4.0)


@pytest.fixture
def two_cycle_map():
    return logistic(3.2)


@pytest.fixture
def feigenbaum_map():
    return logistic(FEIGENBAUM_A)


@pytest.fixture
def fixtures_dir():
    return Path(__file__).resolve().parent.parent / "dynlab" / "fixtures"


@pytest.fixture
def two_cycle_context(two_cycle_map):
    return OrbitContext.build(two_cycle_map, p_max=64, max_iter=20_000)


@pytest.fixture
def ulam_context(ulam):
    return OrbitContext.build(ulam, p_max=64, max_iter=20_000)


@pytest.fixture
def feigenbaum_context(feigenbaum_map):
    return OrbitContext.build(feigenbaum_map, p_max=256, max_iter=20_000)


@pytest.fixture
def desk_config():
    """Small grids and budgets so the sampling pipelines run in seconds."""
    return RunConfig(
        seed=7,
        grid_h=2.0**-12,
        budget=20_000,
        n_samples=400,
        p_max=256,
        threads=1,
        burn_in=1_000,
        visit_min=50,
        cascade_min=5,
        r_min=20,
        support_exp=8,
        signature_exp=8,
        recurrence_exp=6,
        lambda_exp=8,
    )
