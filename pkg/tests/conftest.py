from __future__ import annotations

import numpy as np
import pytest

from crsfl.config import ExperimentConfig, PopulationConfig
from crsfl.population import generate_population


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_population():
    cfg = PopulationConfig(n_users=6, min_devices=2, max_devices=3, feature_dim=8)
    return generate_population(5, cfg)


@pytest.fixture
def tiny_config():
    """A population and model small enough for sub-second end-to-end runs."""
    return ExperimentConfig().with_overrides({
        "population.n_users": 6,
        "population.min_devices": 2,
        "population.max_devices": 3,
        "population.feature_dim": 8,
        "model.hidden": [16, 16, 16],
        "selector.population": 16,
        "selector.generations": 20,
        "predictor.n_trees": 5,
        "run.rounds": 3,
    })


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
