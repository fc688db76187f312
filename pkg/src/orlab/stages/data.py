"""
Dataset generation stage.

Capability: "gen-data"
    Rolls out the noisy scripted expert until data.n_transitions are
    collected and writes <out>/dataset.orld.

    Result:
        path, n_trajectories, n_transitions, n_val_trajectories,
        sigma_data and (mazes only) visitation_entropy.
"""

from typing import TYPE_CHECKING, Any

from orlab.data.dataset import visitation_entropy
from orlab.data.io import save_dataset
from orlab.harness.cells import make_dataset
from orlab.stage import Stage
from orlab.stages.common import out_dir, run_config, store_file
from orlab.types import StageInfo, StageResult

if TYPE_CHECKING:
    from orlab.session import RunSession

DATASET_FILE = "dataset.orld"


class GenDataStage(Stage):
    def info(self) -> StageInfo:
        return StageInfo(
            stage_id="gen_data_v1",
            name="Dataset generation",
            version="1.0.0",
            capabilities=["gen-data"],
            description="Noisy-expert datasets in ORLD format",
        )

    def invoke(self, capability: str, session: "RunSession", params: dict[str, Any]) -> StageResult:
        if capability != "gen-data":
            return self._unknown_capability(capability)
        return self._guarded(capability, lambda: self._generate(session, params))

    def _generate(self, session: "RunSession", params: dict[str, Any]) -> dict[str, Any]:
        config = run_config(params)
        dataset = make_dataset(config.env, config.data)
        path = out_dir(params) / DATASET_FILE
        save_dataset(path, dataset)
        store_file(session, path)

        summary: dict[str, Any] = {
            "path": str(path),
            "n_trajectories": dataset.n_trajectories,
            "n_transitions": dataset.n_transitions,
            "n_val_trajectories": int(dataset.is_val.sum()),
            "sigma_data": config.data.sigma_data,
        }
        if dataset.meta.env.is_maze:
            summary["visitation_entropy"] = visitation_entropy(dataset.view())
        session.set("dataset", summary)
        return summary
