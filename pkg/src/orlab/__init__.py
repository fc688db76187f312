"""
Orlab: a desk-scale offline reinforcement-learning laboratory.

Value functions are trained first and frozen; policies are extracted from
them afterwards; test-time methods may improve the extracted policy while
it acts. Small built-in environments come with exact dynamic-programming
oracles, so every policy can be compared against the optimal action.

This module provides the core building blocks for:
- Run records (state, typed trajectory entries, artifacts) in one file
- Stages and a dispatcher behind the `orlab` command line
- Numerical subpackages: grad, envs, data, value, policy, harness

Example usage:
    from orlab import Dispatcher, RunSession, StageCall
    from orlab.stages import default_stages

    session = RunSession()
    dispatcher = Dispatcher()
    for stage in default_stages():
        dispatcher.register(stage)

    config = {"env": {"layout": "umaze"}, "data": {"n_transitions": 2000}}
    result = dispatcher.dispatch_single(StageCall("gen-data", {"config": config, "out": "runs/demo"}), session)

    session.save("runs/demo/run.orlab")
    restored = RunSession.load("runs/demo/run.orlab")
"""

__version__ = "0.1.0"

# Core types
from orlab.types import (
    EntryType,
    ErrorCode,
    OrlabError,
    RunEntry,
    StageCall,
    StageInfo,
    StageResult,
)

# Run session
from orlab.session import RunSession

# Stage protocol
from orlab.stage import Stage, StageProtocol

# Dispatcher
from orlab.dispatcher import Dispatcher, DispatchResult

__all__ = [
    # Version
    "__version__",
    # Types
    "EntryType",
    "ErrorCode",
    "OrlabError",
    "RunEntry",
    "StageCall",
    "StageInfo",
    "StageResult",
    # Session
    "RunSession",
    # Stage
    "Stage",
    "StageProtocol",
    # Dispatcher
    "Dispatcher",
    "DispatchResult",
]
