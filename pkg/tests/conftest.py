"""
Pytest configuration and shared fixtures for Orlab tests.

Fixtures defined here are automatically available to all tests without
explicit imports.

Fixtures:
- temp_dir: Temporary directory for tests that write several files
- temp_run_path: Temporary path for run-session persistence tests
- umaze_env / chain_env: The two environments most tests run on
- umaze_dataset: A small noisy-expert dataset on the U-maze (session scoped)
- chain_dataset: A small chainrun dataset (session scoped)
- tiny_value_config / tiny_extraction_config: Budgets that train in well
  under a second
- tiny_run_mapping: A complete experiment mapping for harness and CLI tests
"""

import tempfile
from pathlib import Path
from typing import Any, Generator

import pytest

from orlab.data.dataset import Dataset, generate_dataset
from orlab.envs.spec import EnvSpec, make_env
from orlab.policy.extract import ExtractionConfig, ExtractionMethod
from orlab.value.trainer import ValueConfig, ValueObjective


# =============================================================================
# PATH FIXTURES
# =============================================================================


@pytest.fixture
def temp_dir() -> Generator[Path, None, None]:
    """
    Provides a temporary directory for tests that need multiple files.

    Yields:
        Path: Path to a temporary directory that will be cleaned up
              after the test.
    """
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def temp_run_path() -> Generator[Path, None, None]:
    """
    Provides a temporary file path for run-session persistence tests.

    Yields:
        Path: A path to a temporary .orlab file that can be used for
              save/load operations.
    """
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir) / "run.orlab"


# =============================================================================
# ENVIRONMENT AND DATA FIXTURES
# =============================================================================


@pytest.fixture
def umaze_env() -> EnvSpec:
    return make_env("gc-pointmaze", "umaze")


@pytest.fixture
def chain_env() -> EnvSpec:
    return make_env("chainrun")


@pytest.fixture(scope="session")
def umaze_dataset() -> Dataset:
    """
    A U-maze dataset large enough to have a validation split.

    Episodes on the U-maze finish in a few dozen steps, so 2000 transitions
    give well over 20 trajectories.
    """
    return generate_dataset(make_env("gc-pointmaze", "umaze"), None, 2000, 0.2, seed=0)


@pytest.fixture(scope="session")
def chain_dataset() -> Dataset:
    return generate_dataset(make_env("chainrun"), None, 1000, 0.3, seed=0)


# =============================================================================
# CONFIG FIXTURES
# =============================================================================


@pytest.fixture
def tiny_value_config() -> ValueConfig:
    return ValueConfig(
        objective=ValueObjective.IQL,
        steps=5,
        batch_size=32,
        hidden_dims=(16, 16),
        embed_dim=8,
        log_every=2,
    )


@pytest.fixture
def tiny_extraction_config() -> ExtractionConfig:
    return ExtractionConfig(
        method=ExtractionMethod.DDPG_BC,
        alpha=1.0,
        n_samples=4,
        steps=6,
        batch_size=32,
        hidden_dims=(16, 16),
        eval_every=3,
        eval_batch_size=64,
    )


@pytest.fixture
def tiny_run_mapping() -> dict[str, Any]:
    """
    Provides a complete experiment mapping with desk-test budgets.

    Returns:
        dict: The YAML-shaped mapping RunConfig and the experiment configs
              parse, on the U-maze with a few training steps per network.
    """
    return {
        "env": {"env_id": "gc-pointmaze", "layout": "umaze", "max_episode_steps": 40},
        "data": {"n_transitions": 1500, "sigma_data": 0.2, "seed": 0},
        "value": {"objective": "iql", "steps": 4, "batch_size": 16, "hidden_dims": [16, 16], "log_every": 2},
        "extraction": {
            "method": "ddpg+bc",
            "steps": 4,
            "batch_size": 16,
            "hidden_dims": [16, 16],
            "eval_every": 2,
            "eval_batch_size": 32,
        },
        "seed": 0,
        "eval_every": 2,
        "eval_episodes": 2,
        "hyperparameters": [1.0],
    }


# =============================================================================
# MARKER CONFIGURATION
# =============================================================================


def pytest_configure(config: pytest.Config) -> None:
    """
    Register custom markers for the test suite.

    This ensures that custom markers are properly documented and don't
    trigger warnings when used.
    """
    config.addinivalue_line(
        "markers",
        "integration: marks tests as integration tests (run whole pipelines)",
    )
    config.addinivalue_line(
        "markers",
        "slow: marks tests as slow running",
    )
