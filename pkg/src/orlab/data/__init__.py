"""Offline datasets: generation, nested views, batch sampling, ORLD files."""

from orlab.data.dataset import (
    Dataset,
    DatasetMeta,
    FlatData,
    SubsetView,
    Trajectory,
    Transition,
    generate_dataset,
    noisy_expert,
    rollout,
    subset,
    subset_by_transitions,
    visitation_entropy,
)
from orlab.data.io import load_dataset, save_dataset
from orlab.data.sampling import (
    Batch,
    BatchSampler,
    GoalMix,
    GoalSample,
    relabel_goals,
    sample_batch,
    sample_geometric_goal,
)

__all__ = [
    "Batch",
    "BatchSampler",
    "Dataset",
    "DatasetMeta",
    "FlatData",
    "GoalMix",
    "GoalSample",
    "SubsetView",
    "Trajectory",
    "Transition",
    "generate_dataset",
    "load_dataset",
    "noisy_expert",
    "relabel_goals",
    "rollout",
    "sample_batch",
    "sample_geometric_goal",
    "save_dataset",
    "subset",
    "subset_by_transitions",
    "visitation_entropy",
]
