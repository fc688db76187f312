"""
Evaluation stage.

Capability: "eval"
    Runs a batch of episodes with one test-time method and appends one JSON
    line per episode to <out>/episodes.jsonl. With mse=true it also writes
    train / validation / evaluation MSE against the oracle to
    <out>/diagnostics.csv.

    Parameters:
        policy (str): Policy checkpoint.
        value (str, optional): Value checkpoint (sfbc, opex, ttt).
        dataset (str, optional): ORLD file (TTT batches, MSE splits).
        method (str): vanilla | sfbc | opex | ttt (default vanilla).
        beta (float, optional): OPEX step size or TTT KL weight.
        opex_steps (int, optional): Repeated OPEX ascent steps.
        sfbc_n (int, optional): SfBC candidate count.
        episodes (int, optional): Defaults to config eval_episodes.
        mse (bool, optional): Also measure oracle MSEs.
"""

from typing import TYPE_CHECKING, Any

from orlab.data.io import load_dataset
from orlab.diagnostics import mse_report, write_diagnostics_csv
from orlab.envs.oracle import solve_oracle
from orlab.policy.extract import PolicyArtifact
from orlab.seeding import derive_seed
from orlab.stage import Stage
from orlab.stages.common import out_dir, run_config, store_file
from orlab.testtime import EvalMethod, OpexConfig, TttConfig, evaluate_with_method
from orlab.types import EntryType, StageInfo, StageResult
from orlab.value.trainer import FrozenValue

if TYPE_CHECKING:
    from orlab.session import RunSession

EPISODES_FILE = "episodes.jsonl"
DIAGNOSTICS_FILE = "diagnostics.csv"


class EvalStage(Stage):
    def info(self) -> StageInfo:
        return StageInfo(
            stage_id="eval_v1",
            name="Policy evaluation",
            version="1.0.0",
            capabilities=["eval"],
            description="Vanilla, SfBC, OPEX and TTT evaluation with optional oracle MSEs",
        )

    def invoke(self, capability: str, session: "RunSession", params: dict[str, Any]) -> StageResult:
        if capability != "eval":
            return self._unknown_capability(capability)
        if not params.get("policy"):
            return self._invalid_params(capability, "Missing required parameter: policy", {"required": ["policy"]})
        return self._guarded(capability, lambda: self._evaluate(session, params))

    def _evaluate(self, session: "RunSession", params: dict[str, Any]) -> dict[str, Any]:
        config = run_config(params)
        value = FrozenValue.load(params["value"]) if params.get("value") else None
        artifact = PolicyArtifact.load(params["policy"], value)
        view = load_dataset(params["dataset"]).view() if params.get("dataset") else None
        method = EvalMethod(params.get("method") or "vanilla")
        beta = params.get("beta")
        opex = OpexConfig(
            beta=float(beta) if beta is not None else OpexConfig().beta,
            steps=int(params.get("opex_steps") or 1),
        )
        ttt = TttConfig(beta=float(beta)) if beta is not None else None
        episodes = int(params.get("episodes") or config.eval_episodes)

        out = out_dir(params)
        log_path = out / EPISODES_FILE
        log_path.unlink(missing_ok=True)
        env = config.env.eval_env()
        report = evaluate_with_method(
            env,
            artifact,
            method,
            episodes,
            seed=derive_seed(config.seed, "eval"),
            value=value,
            opex=opex,
            ttt=ttt,
            view=view,
            sfbc_n=params.get("sfbc_n"),
            episode_log=log_path,
        )
        for episode in report.episodes:
            session.append("eval", EntryType.EPISODE, episode.to_dict())
        session.append("eval", EntryType.EVAL_RESULT, report.to_dict())
        store_file(session, log_path)
        result = report.to_dict()

        if params.get("mse"):
            if view is None:
                raise KeyError("mse needs a dataset for the train and validation splits")
            oracle = solve_oracle(config.env.build(), gamma=config.value.gamma)
            mse = mse_report(
                artifact, oracle, view, env=env, episodes=episodes,
                seed=derive_seed(config.seed, "mse"), step=int(artifact.metadata.get("steps", 0)),
                run_id=artifact.digest[:12],
            )
            session.append("eval", EntryType.DIAGNOSTICS, mse.to_dict())
            row = {**mse.to_dict(), "score": report.score}
            write_diagnostics_csv(out / DIAGNOSTICS_FILE, [row])
            result["mse"] = mse.to_dict()
        return result
