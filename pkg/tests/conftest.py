import numpy as np
import pytest

from pencap import (
    DEFAULT_X0,
    default_economy_params,
    generate_scenarios,
    homogeneous_plan,
    simulate_claims,
)


@pytest.fixture(scope="session")
def economy():
    return default_economy_params()


@pytest.fixture(scope="session")
def scenario_set(economy):
    """Small shared scenario batch for valuation-level tests."""
    return generate_scenarios(economy, DEFAULT_X0, 4000, 35, master_seed=20070801)


@pytest.fixture(scope="session")
def deterministic_claims(scenario_set):
    plan = homogeneous_plan(100, mode="deterministic")
    return simulate_claims(plan, scenario_set)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(8675309)
