import logging
from pathlib import Path

import numpy as np
import pytest

from src.config import AppConfig, ExperimentConfig, ExperimentKind, WorkerBackend
from src.distributions.families import RandomSource

logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"

# Three-point return distribution used across set, solver and harness tests.
THREE_POINT_SUPPORT = [[-0.02, -0.01], [0.01, 0.03], [0.02, -0.01]]
THREE_POINT_PROBABILITIES = [0.3, 0.4, 0.3]


@pytest.fixture
def rng() -> np.random.Generator:
    """Fresh generator so each test sees the same draws regardless of order."""
    return RandomSource(1234).generator()


@pytest.fixture(scope="session")
def app_config() -> AppConfig:
    return AppConfig(str(CONFIG_DIR))


@pytest.fixture
def three_point_model() -> dict:
    return {
        "kind": "discrete",
        "region": "box",
        "support": THREE_POINT_SUPPORT,
        "probabilities": THREE_POINT_PROBABILITIES,
    }


@pytest.fixture
def make_config(tmp_path):
    """Build a small ExperimentConfig writing into a temporary directory."""

    def factory(kind: ExperimentKind, **fields) -> ExperimentConfig:
        fields.setdefault("out_dir", str(tmp_path / kind.section))
        return ExperimentConfig(experiment=kind, **fields)

    return factory


@pytest.fixture
def local_backend() -> WorkerBackend:
    return WorkerBackend.LOCAL


@pytest.fixture
def returns_csv(tmp_path) -> Path:
    """Forty periods of three normal asset returns with a header row."""
    generator = RandomSource(99).generator()
    means = np.array([0.01, 0.005, 0.0])
    sds = np.array([0.02, 0.01, 0.005])
    matrix = means + sds * generator.standard_normal((40, 3))
    path = tmp_path / "returns.csv"
    lines = ["a,b,c"] + [",".join(f"{value:.8f}" for value in row) for row in matrix]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"Wrote test returns to {path}")
    return path
