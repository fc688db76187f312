"""
Parameter handling shared by the pipeline stages.

Every stage receives the same parameter shape from the CLI:

    config:  parsed experiment mapping (file plus --set overrides)
    out:     output directory
    dataset / value / policy / csv:  optional input paths
"""

from pathlib import Path
from typing import TYPE_CHECKING, Any

from orlab.data.dataset import Dataset
from orlab.data.io import load_dataset
from orlab.harness.cells import make_dataset
from orlab.harness.config import RunConfig

if TYPE_CHECKING:
    from orlab.session import RunSession

DEFAULT_OUT = "runs/latest"


def config_mapping(params: dict[str, Any]) -> dict[str, Any]:
    mapping = params.get("config") or {}
    if not isinstance(mapping, dict):
        raise TypeError(f"config must be a mapping, got {type(mapping).__name__}")
    return mapping


def run_config(params: dict[str, Any]) -> RunConfig:
    return RunConfig.from_dict(config_mapping(params))


def out_dir(params: dict[str, Any]) -> Path:
    path = Path(params.get("out") or DEFAULT_OUT)
    path.mkdir(parents=True, exist_ok=True)
    return path


def dataset_for(params: dict[str, Any], config: RunConfig) -> Dataset:
    """The dataset at params["dataset"], else a fresh one from config.data."""
    if params.get("dataset"):
        return load_dataset(params["dataset"])
    return make_dataset(config.env, config.data)


def store_file(session: "RunSession", path: Path) -> None:
    """Keep a copy of an output file inside the run session."""
    session.write_artifact(path.name, path.read_bytes())
