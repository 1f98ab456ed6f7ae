"""Shared fixtures for the test suite."""

import numpy as np
import pytest

from edgecache import SynthConfig, generate_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_trace():
    """A short synthetic trace used by tests that just need realistic data."""
    cfg = SynthConfig(num_slots=60, arrival_rate=1.5, seed=3, initial_files=3)
    return generate_synthetic(cfg)
