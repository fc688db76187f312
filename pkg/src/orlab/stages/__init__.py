"""
Built-in pipeline stages.

- GenDataStage: gen-data
- TrainingStage: train-value, extract
- EvalStage: eval
- ExperimentStage: matrix, sweep-coverage, o2o, testtime, representations, plot
"""

from orlab.stages.data import GenDataStage
from orlab.stages.evaluate import EvalStage
from orlab.stages.experiments import ExperimentStage
from orlab.stages.training import TrainingStage


def default_stages() -> list[GenDataStage | TrainingStage | EvalStage | ExperimentStage]:
    return [GenDataStage(), TrainingStage(), EvalStage(), ExperimentStage()]


__all__ = ["EvalStage", "ExperimentStage", "GenDataStage", "TrainingStage", "default_stages"]
