"""
Experiment sweeps beyond the data-scaling matrix.

- coverage_sweep: scores over (dataset size x sigma_data), regenerating the
  dataset for every noise level.
- offline_to_online: offline IQL + AWR training followed by online
  collection with one value and one policy step per environment step,
  logging train / validation / evaluation MSE and score along the way.
- eval_sweep: one extracted policy per seed evaluated with vanilla, SfBC,
  OPEX and TTT at every configured beta.
"""

import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import TYPE_CHECKING, Any

import numpy as np

from orlab.data.dataset import Dataset, SubsetView, Trajectory, rollout
from orlab.data.sampling import BatchSampler
from orlab.diagnostics import ActionFn, MseReport, mse_report
from orlab.envs.dynamics import reset, step
from orlab.envs.oracle import solve_oracle
from orlab.envs.spec import EnvSpec, EnvState
from orlab.harness.cells import (
    CellRecord,
    data_view,
    featurizer_for,
    make_dataset,
    run_cell,
)
from orlab.harness.config import CoverageConfig, EvalSweepConfig, OnlineConfig, RunConfig, worker_count
from orlab.harness.matrix import MatrixResult, matrix_from_records, record_cells, run_jobs
from orlab.policy.extract import ExtractionConfig, PolicyLearner, build_policy, extract
from orlab.policy.head import StdMode
from orlab.seeding import derive_seed
from orlab.testtime import EvalMethod, EvalReport, OpexConfig, TttConfig, evaluate_with_method, score_of
from orlab.types import EntryType, OrlabError
from orlab.value.trainer import ValueLearner, build_critic, train_value

if TYPE_CHECKING:
    from orlab.session import RunSession

logger = logging.getLogger(__name__)


def with_learned_std(extraction: ExtractionConfig) -> ExtractionConfig:
    """Generalization experiments default to a learnable policy std."""
    if extraction.std_mode is not None:
        return extraction
    return replace(extraction, std_mode=StdMode.LEARNED)


# =============================================================================
# COVERAGE SWEEP
# =============================================================================


def _coverage_job(cell: RunConfig, dataset: Dataset, sigma: float) -> list[CellRecord]:
    try:
        record = run_cell(cell, dataset)
    except OrlabError as exc:
        logger.warning("coverage cell failed (sigma=%s size=%s seed=%d): %s", sigma, cell.policy_data, cell.seed, exc)
        record = CellRecord.failed(cell, exc)
    return [replace(record, extra={**record.extra, "sigma_data": float(sigma)})]


def coverage_sweep(
    config: CoverageConfig,
    session: "RunSession | None" = None,
    workers: int | None = None,
) -> MatrixResult:
    """
    Scores over (dataset size x sigma_data) for the base extraction method.

    Every size is used for both value training and extraction. Datasets
    are regenerated per sigma from the same data seed, so only the noise
    level differs between columns.

    Raises:
        OrlabError: HARNESS_ALL_SEEDS_FAILED when a cell has no successful
            seed.
    """
    workers = workers or worker_count()
    base = config.base
    n_transitions = max(base.data.n_transitions, *config.sizes)
    datasets = {
        sigma: make_dataset(base.env, replace(base.data, sigma_data=sigma), n_transitions)
        for sigma in config.sigmas
    }
    jobs = [
        (lambda cell=base.with_sigma(sigma).with_sizes(size, size).with_seed(seed), sigma=sigma:
            _coverage_job(cell, datasets[sigma], sigma))
        for sigma in config.sigmas
        for size in config.sizes
        for seed in config.seeds
    ]
    logger.info(
        "coverage sweep: %d sigmas x %d sizes x %d seeds with %d workers",
        len(config.sigmas), len(config.sizes), len(config.seeds), workers,
    )
    records = run_jobs(jobs, workers)
    record_cells(session, records)
    matrix = matrix_from_records(
        f"coverage-{base.extraction.method.value}",
        "size",
        "sigma_data",
        config.sizes,
        config.sigmas,
        config.seeds,
        records,
        lambda r: (float(r.policy_size or 0), float(r.extra["sigma_data"])),
    )
    logger.info("coverage aggregate %.4f", matrix.aggregate())
    return MatrixResult(matrices=(matrix,), records=tuple(records))


# =============================================================================
# OFFLINE TO ONLINE
# =============================================================================


@dataclass(frozen=True)
class OnlinePoint:
    """Diagnostics at one point of the offline-to-online run."""

    step: int
    phase: str
    score: float
    mean_return: float
    train_mse: float
    val_mse: float
    eval_mse: float
    n_transitions: int

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class OnlineResult:
    points: tuple[OnlinePoint, ...]
    episodes_collected: int

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.points], dtype=np.float64)

    def correlation(self, mse: str) -> float:
        """Pearson correlation between an MSE series and the score; NaN if undefined."""
        return _correlation(self.series(mse), self.series("score"))

    def to_dict(self) -> dict[str, Any]:
        return {
            "points": [p.to_dict() for p in self.points],
            "episodes_collected": self.episodes_collected,
            "correlations": {m: self.correlation(m) for m in ("train_mse", "val_mse", "eval_mse")},
        }


def _correlation(x: np.ndarray, y: np.ndarray) -> float:
    if len(x) < 2 or np.std(x) == 0.0 or np.std(y) == 0.0:
        return float("nan")
    return float(np.corrcoef(x, y)[0, 1])


def rollout_score(env: EnvSpec, action_fn: ActionFn, episodes: int, seed: int) -> tuple[float, float]:
    """(score, mean return) of deterministic episodes under `action_fn`."""

    def act(spec: EnvSpec, state: EnvState, rng: np.random.Generator) -> np.ndarray:
        goal = state.goal[None] if spec.goal_conditioned else None
        return np.atleast_2d(action_fn(state.obs[None], goal))[0]

    returns, successes = [], []
    for i in range(episodes):
        initial = reset(env, derive_seed(seed, "episode", i))
        traj = rollout(env, act, np.random.default_rng(derive_seed(seed, "actions", i)), traj_id=i, initial=initial)
        returns.append(float(traj.rewards.sum()))
        successes.append(bool(traj.terminals[-1]))
    return score_of(env, returns, successes), float(np.mean(returns))


class _EpisodeBuffer:
    """Transitions of the online episode in progress."""

    def __init__(self) -> None:
        self.obs: list[np.ndarray] = []
        self.actions: list[np.ndarray] = []
        self.rewards: list[float] = []
        self.next_obs: list[np.ndarray] = []
        self.terminals: list[bool] = []

    def add(self, obs: np.ndarray, action: np.ndarray, reward: float, next_obs: np.ndarray, terminal: bool) -> None:
        self.obs.append(obs)
        self.actions.append(action)
        self.rewards.append(reward)
        self.next_obs.append(next_obs)
        self.terminals.append(terminal)

    def trajectory(self, traj_id: int, goal: np.ndarray | None) -> Trajectory:
        acts = np.array(self.actions)
        return Trajectory(
            obs=np.array(self.obs),
            actions=acts,
            rewards=np.array(self.rewards, dtype=np.float64),
            next_obs=np.array(self.next_obs),
            next_actions=np.vstack([acts[1:], acts[-1:]]),
            terminals=np.array(self.terminals, dtype=bool),
            traj_id=traj_id,
            goal=goal,
        )


def offline_to_online(
    config: OnlineConfig,
    session: "RunSession | None" = None,
    policy_fn: ActionFn | None = None,
) -> OnlineResult:
    """
    Offline training, then online fine-tuning with MSE tracking.

    The offline phase trains the base value objective and extraction
    method for their configured budgets. Each online step acts once with
    the current (stochastic) policy, then takes one value and one policy
    gradient step on the current dataset. Completed episodes are appended
    to the dataset as train trajectories. A point is logged after the
    offline phase and every `eval_every` online steps.

    Args:
        config: Base run plus online budgets.
        session: Receives one DIAGNOSTICS entry per point.
        policy_fn: Replaces the learned policy for acting and measurement;
            no policy updates are made.

    Raises:
        OrlabError: Propagated from training and the oracle (e.g.
            DIAG_MISSING_VALIDATION when the dataset has no val split).
    """
    base = config.base
    seed = base.seed
    env = base.env.build()
    eval_env = base.env.eval_env()
    oracle = solve_oracle(env, resolution=config.oracle_resolution, gamma=base.value.gamma)
    dataset = make_dataset(base.env, base.data)
    view = dataset.view()

    critic, v_net = build_critic(base.value, env)
    value_learner = ValueLearner(base.value, critic, v_net, seed=derive_seed(seed, "value-init"))
    value = value_learner.train(view, derive_seed(seed, "value-batches"))

    extraction = with_learned_std(base.extraction)
    policy = build_policy(extraction, env.state_dim, env.action_dim, env.goal_dim, featurizer_for(base))
    policy_learner = PolicyLearner(extraction, policy, seed=derive_seed(seed, "policy-init"))
    gamma = extraction.gamma if env.goal_conditioned else None
    policy_sampler = _policy_sampler(view, extraction, seed, 0, gamma)
    if policy_fn is None:
        for _ in range(extraction.steps):
            policy_learner.update(policy_sampler.next(), value)

    def current_fn() -> ActionFn:
        if policy_fn is not None:
            return policy_fn
        params = policy_learner.params.copy()
        return lambda obs, goals: np.clip(policy.mean(params, obs, goals).data, -1.0, 1.0)

    points: list[OnlinePoint] = []

    def log_point(step_index: int, phase: str) -> None:
        fn = current_fn()
        report: MseReport = mse_report(
            fn, oracle, dataset.view(), env=eval_env, episodes=config.mse_episodes,
            seed=derive_seed(seed, "mse", step_index), step=step_index,
        )
        score, mean_return = rollout_score(eval_env, fn, base.eval_episodes, derive_seed(seed, "eval", step_index))
        point = OnlinePoint(
            step=step_index,
            phase=phase,
            score=score,
            mean_return=mean_return,
            train_mse=report.train_mse,
            val_mse=report.val_mse,
            eval_mse=report.eval_mse,
            n_transitions=dataset.n_transitions,
        )
        points.append(point)
        logger.info(
            "%s step %d: score %.3f, mse train %.4f val %.4f eval %.4f",
            phase, step_index, score, point.train_mse, point.val_mse, point.eval_mse,
        )
        if session is not None:
            session.append("o2o", EntryType.DIAGNOSTICS, point.to_dict())

    log_point(0, "offline")

    episodes = 0
    value_sampler = value_learner.sampler(view, derive_seed(seed, "online-value", episodes))
    act_rng = np.random.default_rng(derive_seed(seed, "online-actions"))
    state = reset(env, derive_seed(seed, "online-episode", episodes))
    buffer = _EpisodeBuffer()
    for t in range(1, config.online_steps + 1):
        goal = state.goal if env.goal_conditioned else None
        if policy_fn is not None:
            action = np.atleast_2d(policy_fn(state.obs[None], None if goal is None else goal[None]))[0]
        else:
            action = policy.act(policy_learner.params, state.obs, goal, act_rng)
        action = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        nxt, reward, done = step(env, state, action)
        buffer.add(state.obs, action, reward, nxt.obs, nxt.reached)
        state = nxt
        if done:
            dataset = dataset.extended([buffer.trajectory(dataset.n_trajectories, goal)])
            episodes += 1
            view = dataset.view()
            value_sampler = value_learner.sampler(view, derive_seed(seed, "online-value", episodes))
            policy_sampler = _policy_sampler(view, extraction, seed, episodes, gamma)
            state = reset(env, derive_seed(seed, "online-episode", episodes))
            buffer = _EpisodeBuffer()

        value_learner.update(value_sampler.next())
        if policy_fn is None:
            value = value_learner.freeze()
            policy_learner.update(policy_sampler.next(), value)
        if t % config.eval_every == 0 or t == config.online_steps:
            log_point(t, "online")

    return OnlineResult(points=tuple(points), episodes_collected=episodes)


def _policy_sampler(
    view: SubsetView, extraction: ExtractionConfig, seed: int, extension: int, gamma: float | None
) -> BatchSampler:
    return BatchSampler(
        view, extraction.batch_size, derive_seed(seed, "online-policy", extension), gamma=gamma, mix=extraction.goal_mix
    )


# =============================================================================
# TEST-TIME SWEEP
# =============================================================================


@dataclass(frozen=True)
class EvalSweepRow:
    seed: int
    method: str
    beta: float
    score: float
    best_mode: str
    mean_q_gain: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class EvalSweepResult:
    rows: tuple[EvalSweepRow, ...]

    def mean_score(self, method: str, beta: float = 0.0) -> float:
        scores = [r.score for r in self.rows if r.method == method and r.beta == beta]
        return float(np.mean(scores)) if scores else float("nan")

    def best_beta(self, method: str) -> tuple[float, float]:
        """(beta, mean score over seeds) of the best beta for `method`."""
        betas = sorted({r.beta for r in self.rows if r.method == method})
        if not betas:
            raise KeyError(method)
        means = [self.mean_score(method, b) for b in betas]
        i = int(np.argmax(means))
        return betas[i], means[i]

    def to_dict(self) -> dict[str, Any]:
        return {"rows": [r.to_dict() for r in self.rows]}


def _row(seed: int, report: EvalReport, beta: float) -> EvalSweepRow:
    gains = [e.mean_q_gain for e in report.episodes if e.mean_q_gain is not None]
    return EvalSweepRow(
        seed=seed,
        method=report.method.value,
        beta=float(beta),
        score=report.score,
        best_mode=report.best_mode,
        mean_q_gain=float(np.mean(gains)) if gains else None,
    )


def _eval_seed(config: EvalSweepConfig, dataset: Dataset, seed: int) -> list[EvalSweepRow]:
    base = config.base.with_seed(seed)
    value = train_value(data_view(dataset, base.value_data), base.value, seed)
    policy_view = data_view(dataset, base.policy_data)
    artifact = extract(with_learned_std(base.extraction), value, policy_view, seed, featurizer_for(base))
    env = base.env.eval_env()
    eval_seed = derive_seed(seed, "testtime")

    def run(method: EvalMethod, **kwargs: Any) -> EvalReport:
        return evaluate_with_method(env, artifact, method, base.eval_episodes, eval_seed, value=value, **kwargs)

    rows = [
        _row(seed, run(EvalMethod.VANILLA), 0.0),
        _row(seed, run(EvalMethod.SFBC, sfbc_n=config.sfbc_n), 0.0),
    ]
    rows += [_row(seed, run(EvalMethod.OPEX, opex=OpexConfig(beta=b)), b) for b in config.opex_betas]
    rows += [_row(seed, run(EvalMethod.TTT, ttt=TttConfig(beta=b), view=policy_view), b) for b in config.ttt_betas]
    return rows


def eval_sweep(
    config: EvalSweepConfig,
    session: "RunSession | None" = None,
    workers: int | None = None,
) -> EvalSweepResult:
    """
    Compare test-time methods on the same extracted policies.

    Every method and beta of a seed is evaluated on the same start states.
    """
    workers = workers or worker_count()
    dataset = make_dataset(config.base.env, config.base.data)
    jobs: Sequence[Any] = [(lambda s=s: _eval_seed(config, dataset, s)) for s in config.seeds]
    if workers <= 1:
        batches = [job() for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(lambda job: job(), jobs))
    rows = tuple(r for batch in batches for r in batch)
    if session is not None:
        for r in rows:
            session.append("testtime", EntryType.EVAL_RESULT, r.to_dict())
    for method in ("opex", "ttt"):
        if any(r.method == method for r in rows):
            beta, score = EvalSweepResult(rows).best_beta(method)
            logger.info("best %s beta %.3g: mean score %.4f", method, beta, score)
    return EvalSweepResult(rows=rows)
