"""
End-to-end tests for the orlab command line: the decoupled
gen-data -> train-value -> extract -> eval pipeline, plot re-rendering,
and exit codes.
"""

import json
from pathlib import Path
from typing import Any

import pytest
import yaml

from orlab.cli import build_parser, effective_config, main
from orlab.harness.emit import emit_outputs
from orlab.harness.matrix import MatrixCell, ScalingMatrix
from orlab.session import RUN_FILE_NAME, RunSession
from orlab.types import EntryType


@pytest.fixture
def config_file(temp_dir: Path, tiny_run_mapping: dict[str, Any]) -> Path:
    path = temp_dir / "exp.yaml"
    path.write_text(yaml.safe_dump(tiny_run_mapping))
    return path


# =============================================================================
# CONFIG ASSEMBLY
# =============================================================================


class TestEffectiveConfig:
    """Tests for flag and override precedence."""

    def test_field_flags_then_set_overrides(self, config_file: Path) -> None:
        args = build_parser().parse_args([
            "gen-data", "--config", str(config_file), "--seed", "4", "--sigma-data", "0.5",
            "--set", "seed=7", "--set", "value.steps=2",
        ])
        mapping = effective_config(args)
        assert mapping["seed"] == 7
        assert mapping["data"]["sigma_data"] == 0.5
        assert mapping["value"]["steps"] == 2
        assert mapping["env"]["layout"] == "umaze"

    def test_no_config_file(self) -> None:
        args = build_parser().parse_args(["gen-data", "--env", "chainrun"])
        assert effective_config(args) == {"env": {"env_id": "chainrun"}}

    def test_unknown_command(self) -> None:
        with pytest.raises(SystemExit):
            build_parser().parse_args(["train-everything"])


# =============================================================================
# PIPELINE
# =============================================================================


@pytest.mark.integration
class TestPipeline:
    """Tests for the decoupled stage commands."""

    def test_gen_train_extract_eval(self, config_file: Path, temp_dir: Path) -> None:
        data_dir, value_dir, policy_dir, eval_dir = (temp_dir / n for n in ("data", "value", "policy", "eval"))
        dataset = data_dir / "dataset.orld"
        value = value_dir / "value.orlp"
        policy = policy_dir / "policy.orlp"

        assert main(["gen-data", "--config", str(config_file), "--out", str(data_dir)]) == 0
        assert dataset.exists()
        assert (data_dir / "config.yaml").exists()

        assert main([
            "train-value", "--config", str(config_file), "--dataset", str(dataset), "--out", str(value_dir),
        ]) == 0
        assert value.exists() and value.with_suffix(".json").exists()

        assert main([
            "extract", "--config", str(config_file), "--dataset", str(dataset),
            "--value", str(value), "--hyperparameter", "0.3", "--out", str(policy_dir),
        ]) == 0
        assert policy.exists()
        assert (policy_dir / "extract_curves.csv").read_text().startswith("run_id,")

        assert main([
            "eval", "--config", str(config_file), "--policy", str(policy), "--value", str(value),
            "--eval-method", "opex", "--beta", "0.1", "--episodes", "1", "--out", str(eval_dir),
        ]) == 0
        lines = (eval_dir / "episodes.jsonl").read_text().splitlines()
        assert len(lines) == 2
        assert all(json.loads(line)["method"] == "opex" for line in lines)

        session = RunSession.load(eval_dir / RUN_FILE_NAME)
        assert session.get("command") == "eval"
        assert len(session.entries(EntryType.EVAL_RESULT)) == 1
        assert "episodes.jsonl" in session.list_artifacts()

    def test_pathologies_command(self, config_file: Path, temp_dir: Path) -> None:
        out = temp_dir / "pathologies"
        assert main([
            "pathologies", "--config", str(config_file), "--set", "pathologies.spread_episodes=1", "--out", str(out),
        ]) == 0
        run_ids = {line.split(",")[0] for line in (out / "pathologies.csv").read_text().splitlines()[1:]}
        assert run_ids == {"awr-seed0", "ddpg+bc-seed0", "spread-awr-seed0", "spread-ddpg+bc-seed0"}
        session = RunSession.load(out / RUN_FILE_NAME)
        assert len(session.entries(EntryType.DIAGNOSTICS)) == 4

    def test_effective_config_is_written(self, config_file: Path, temp_dir: Path) -> None:
        out = temp_dir / "data"
        assert main([
            "gen-data", "--config", str(config_file), "--set", "data.n_transitions=300", "--out", str(out),
        ]) == 0
        written = yaml.safe_load((out / "config.yaml").read_text())
        assert written["data"]["n_transitions"] == 300
        assert RunSession.load(out / RUN_FILE_NAME).get("dataset")["n_transitions"] >= 300


class TestExitCodes:
    """Tests for failure reporting."""

    def test_missing_policy_checkpoint(self, config_file: Path, temp_dir: Path) -> None:
        code = main([
            "eval", "--config", str(config_file), "--policy", str(temp_dir / "absent.orlp"), "--out", str(temp_dir / "e"),
        ])
        assert code == 1

    def test_malformed_override(self, temp_dir: Path) -> None:
        assert main(["gen-data", "--set", "nonsense", "--out", str(temp_dir)]) == 2

    def test_missing_config_file(self, temp_dir: Path) -> None:
        assert main(["gen-data", "--config", str(temp_dir / "absent.yaml"), "--out", str(temp_dir)]) == 2

    def test_invalid_config_fails_stage(self, config_file: Path, temp_dir: Path) -> None:
        assert main(["gen-data", "--config", str(config_file), "--set", "data.sigma_data=-1", "--out", str(temp_dir)]) == 1


class TestPlot:
    """Tests for re-rendering heatmaps from CSV."""

    def test_plot_from_csv(self, temp_dir: Path) -> None:
        cells = (MatrixCell(100.0, 100.0, 1.0, (0.25,)), MatrixCell(200.0, 100.0, 1.0, (0.75,)))
        matrix = ScalingMatrix("awr", "policy_data", "value_data", (100.0, 200.0), (100.0,), (0,), cells)
        emit_outputs(temp_dir / "matrix", [matrix])
        out = temp_dir / "plots"
        assert main(["plot", "--csv", str(temp_dir / "matrix" / "matrices.csv"), "--out", str(out)]) == 0
        assert (out / "awr.svg").read_bytes() == (temp_dir / "matrix" / "awr.svg").read_bytes()
        assert (out / "aggregates.csv").exists()
