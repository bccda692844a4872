"""Pytest configuration and shared fixtures."""

from pathlib import Path

import numpy as np
import pytest

from banda.config import ExperimentConfig, ModelParams
from banda.env import EnergyField
from banda.scales import ScaleSet, compute_scales


@pytest.fixture
def fixtures_dir() -> Path:
    """Return the fixtures directory path."""
    return Path(__file__).parent / "fixtures"


@pytest.fixture
def golden_outputs_dir() -> Path:
    """Return the golden outputs directory path."""
    return Path(__file__).parent / "golden_outputs"


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def params() -> ModelParams:
    """Aging-regime parameters small enough to simulate in well under a second."""
    return ModelParams.for_alpha(n=12, alpha=0.6, beta=1.5, seed=7)


@pytest.fixture
def scales(params: ModelParams) -> ScaleSet:
    return compute_scales(params)


@pytest.fixture
def field(params: ModelParams) -> EnergyField:
    return EnergyField(params)


@pytest.fixture
def small_params() -> ModelParams:
    return ModelParams(n=6, beta=1.0, cbar=0.3, seed=3)


@pytest.fixture
def small_config(small_params: ModelParams, tmp_path: Path) -> ExperimentConfig:
    """Configuration whose suites finish in seconds."""
    return ExperimentConfig(
        model=small_params,
        replicas=3,
        n_grid=(),
        delta_grid=(0.5, 0.2),
        exact_n=4,
        exact_environments=3,
        sst_runs=2_000,
        h2_runs=500,
        limit_paths=200,
        bootstrap=200,
        green_samples=4,
        green_escape_radius=4,
        csv_replicas=2,
        output_dir=tmp_path / "out",
    )
