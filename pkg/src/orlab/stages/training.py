"""
Value-learning and policy-extraction stages.

Capability: "train-value"
    Trains config.value on the first value_data transitions of the dataset
    and writes <out>/value.orlp (+ .json sidecar).

    Parameters:
        dataset (str, optional): ORLD file; generated from config if absent.

Capability: "extract"
    Extracts a policy with config.extraction from a frozen value function
    and writes <out>/policy.orlp (+ .json sidecar) and the train/validation
    loss curves to <out>/extract_curves.csv.

    Parameters:
        dataset (str, optional): ORLD file.
        value (str, optional): Value checkpoint; only plain-BC objectives
            may omit it.
        hyperparameter (float, optional): Replaces alpha (or N for SfBC).
"""

import logging
from typing import TYPE_CHECKING, Any

from orlab.diagnostics import overfit_gap, write_diagnostics_csv
from orlab.harness.cells import data_view, featurizer_for
from orlab.policy.extract import extract
from orlab.stage import Stage
from orlab.stages.common import dataset_for, out_dir, run_config, store_file
from orlab.types import EntryType, StageInfo, StageResult
from orlab.value.trainer import FrozenValue, train_value

if TYPE_CHECKING:
    from orlab.session import RunSession

logger = logging.getLogger(__name__)

VALUE_FILE = "value.orlp"
POLICY_FILE = "policy.orlp"
CURVES_FILE = "extract_curves.csv"


class TrainingStage(Stage):
    """Decoupled training: value first, then extraction against the frozen value."""

    def info(self) -> StageInfo:
        return StageInfo(
            stage_id="training_v1",
            name="Value learning and policy extraction",
            version="1.0.0",
            capabilities=["train-value", "extract"],
            description="IQL / SARSA / CRL value functions; AWR / DDPG+BC / SfBC extraction",
        )

    def invoke(self, capability: str, session: "RunSession", params: dict[str, Any]) -> StageResult:
        if capability == "train-value":
            return self._guarded(capability, lambda: self._train_value(session, params))
        if capability == "extract":
            return self._guarded(capability, lambda: self._extract(session, params))
        return self._unknown_capability(capability)

    # =========================================================================
    # CAPABILITIES
    # =========================================================================

    def _train_value(self, session: "RunSession", params: dict[str, Any]) -> dict[str, Any]:
        config = run_config(params)
        dataset = dataset_for(params, config)
        value = train_value(data_view(dataset, config.value_data), config.value, config.seed)
        for row in value.metadata.get("history", []):
            session.append("train-value", EntryType.TRAIN_METRICS, dict(row))

        path = value.save(out_dir(params) / VALUE_FILE)
        store_file(session, path)
        result = {
            "path": str(path),
            "objective": value.objective.value,
            "digest": value.digest,
            "steps": value.metadata.get("steps", 0),
        }
        session.set("value", result)
        return result

    def _extract(self, session: "RunSession", params: dict[str, Any]) -> dict[str, Any]:
        config = run_config(params)
        dataset = dataset_for(params, config)
        value = FrozenValue.load(params["value"]) if params.get("value") else None
        extraction = config.extraction
        if params.get("hyperparameter") is not None:
            extraction = extraction.with_hyperparameter(float(params["hyperparameter"]))

        artifact = extract(extraction, value, data_view(dataset, config.policy_data), config.seed, featurizer_for(config))
        out = out_dir(params)
        path = artifact.save(out / POLICY_FILE)
        store_file(session, path)

        gaps = overfit_gap(artifact.curves) if "val_loss" in artifact.curves[0] else None
        rows = []
        for i, row in enumerate(artifact.curves):
            entry = {"run_id": extraction.method.value, **row}
            if gaps is not None:
                entry["overfit_gap"] = float(gaps[i, 1])
            rows.append(entry)
            session.append("extract", EntryType.TRAIN_METRICS, entry)
        write_diagnostics_csv(out / CURVES_FILE, rows)

        final = artifact.curves[-1]
        result = {
            "path": str(path),
            "method": extraction.method.value,
            "hyperparameter": extraction.hyperparameter,
            "digest": artifact.digest,
            "value_digest": artifact.value_digest,
            "train_loss": final["train_loss"],
            "val_loss": final.get("val_loss"),
        }
        session.set("policy", result)
        logger.info("extracted %s policy %s", result["method"], result["digest"][:12])
        return result
