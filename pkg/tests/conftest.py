from __future__ import annotations

import functools
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@functools.lru_cache(maxsize=None)
def calibrated_ocd(p, beta, gamma, B_reps=200, seed=0, variant="ocd"):
    """Fitted OCD with Monte Carlo thresholds, computed once per session."""
    from ocdetect import OCD, DetectorConfig, build_grid
    from ocdetect.calibrate import calibrate_thresholds

    cfg = DetectorConfig(p=p, beta=beta, gamma=gamma, variant=variant)
    ts = calibrate_thresholds(cfg, build_grid(cfg), B_reps=B_reps, seed=seed)
    return OCD.from_config(cfg, ts)


@pytest.fixture(scope="session")
def calibrated():
    return calibrated_ocd
