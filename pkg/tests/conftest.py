"""Shared fixtures: small, fast engine configurations reused across modules."""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from coexsim.channel import LinkBudgetConfig, ShadowingConfig
from coexsim.engine import EngineConfig
from coexsim.scenario import RoadConfig
from coexsim.traffic import TrafficConfig, TrafficMode

# Property tests share a single core with the simulation runs; wall-clock
# deadlines would only add flakiness.
settings.register_profile(
    "slowbox", deadline=None,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("slowbox")


def small_engine_config(**overrides) -> EngineConfig:
    """A scaled-down scenario (20 vehicles, 2 s measured) for unit tests."""
    base = dict(
        road=RoadConfig(length_m=500.0, density_veh_per_km=40.0),
        itsg5_fraction=0.5,
        warm_up_s=0.5,
        measure_s=2.0,
    )
    base.update(overrides)
    return EngineConfig(**base)


@pytest.fixture(scope="session")
def mixed_log():
    """One small 50/50 run shared by tests that only inspect outputs."""
    from coexsim import engine
    return engine.run(small_engine_config(), seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
