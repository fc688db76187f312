"""
Core data types for Orlab.

This module defines the shared vocabulary of the laboratory: error codes,
the single exception type raised by numerical modules, the typed entries
recorded in a run session, and the request/result types exchanged between
the dispatcher and its stages.

The types defined here are:

1. Immutable where appropriate (run entries and stage results never change)
2. Serializable to JSON for persistence in the run session
3. Validated on construction so bad records fail early
"""

from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any


# =============================================================================
# ENUMS
# =============================================================================


class EntryType(str, Enum):
    """
    Classification of run-session trajectory entries.

    Every event of an experiment (a stage starting, a training metric, an
    evaluation, a finished harness cell) is appended to the run session
    under one of these types so runs can be filtered and audited later.

    The enum inherits from str so JSON serialization produces readable
    string values.
    """

    # Session lifecycle
    RUN_CREATED = "run_created"
    RUN_LOADED = "run_loaded"
    RUN_SAVED = "run_saved"

    # State and artifacts
    STATE_SET = "state_set"
    ARTIFACT_WRITTEN = "artifact_written"

    # Stage execution (dispatcher)
    STAGE_STARTED = "stage_started"
    STAGE_COMPLETED = "stage_completed"
    STAGE_FAILED = "stage_failed"

    # Training and evaluation
    TRAIN_METRICS = "train_metrics"
    EVAL_RESULT = "eval_result"
    EPISODE = "episode"
    DIAGNOSTICS = "diagnostics"

    # Harness
    CELL_COMPLETED = "cell_completed"
    CELL_FAILED = "cell_failed"

    # Free-form
    SYSTEM_NOTE = "system_note"


class ErrorCode(str, Enum):
    """
    Standard error codes for Orlab operations.

    Codes are grouped by the module that raises them:
    - GRAD_*: automatic differentiation and optimizers
    - ENV_*: toy environments and dynamic-programming oracles
    - DATA_*: datasets, views and samplers
    - VALUE_* / POLICY_* / EVAL_*: learners and evaluation
    - DIAG_*: diagnostics
    - HARNESS_* / STAGE_*: orchestration
    - PERSIST_*: binary file formats and run sessions
    """

    # Automatic differentiation
    GRAD_SHAPE_MISMATCH = "grad_shape_mismatch"
    GRAD_NON_FINITE = "grad_non_finite"
    GRAD_NOT_SCALAR = "grad_not_scalar"
    GRAD_GRAPH_NOT_RECORDED = "grad_graph_not_recorded"

    # Environments and oracles
    ENV_NON_FINITE_ACTION = "env_non_finite_action"
    ENV_UNREACHABLE_GOAL = "env_unreachable_goal"
    ENV_INVALID_LAYOUT = "env_invalid_layout"
    ENV_ORACLE_RESOLUTION = "env_oracle_resolution"

    # Datasets
    DATA_EMPTY_VIEW = "data_empty_view"
    DATA_K_OUT_OF_RANGE = "data_k_out_of_range"
    DATA_INVALID_MIX = "data_invalid_mix"
    DATA_NON_FINITE_ACTION = "data_non_finite_action"

    # Learners
    VALUE_MISSING_GOAL = "value_missing_goal"
    VALUE_UNSUPPORTED = "value_unsupported"
    POLICY_INVALID_CONFIG = "policy_invalid_config"
    POLICY_INVALID_WEIGHTS = "policy_invalid_weights"
    EVAL_DIMENSION_MISMATCH = "eval_dimension_mismatch"
    EVAL_NON_FINITE_GRADIENT = "eval_non_finite_gradient"

    # Diagnostics
    DIAG_MISSING_VALIDATION = "diag_missing_validation"
    DIAG_EMPTY_BATCH = "diag_empty_batch"
    DIAG_TOO_FEW_STATES = "diag_too_few_states"

    # Harness and stages
    HARNESS_INVALID_CONFIG = "harness_invalid_config"
    HARNESS_ALL_SEEDS_FAILED = "harness_all_seeds_failed"
    STAGE_NOT_FOUND = "stage_not_found"
    STAGE_INVALID_PARAMS = "stage_invalid_params"
    STAGE_INVOCATION_FAILED = "stage_invocation_failed"

    # Persistence
    PERSIST_BAD_MAGIC = "persist_bad_magic"
    PERSIST_VERSION_MISMATCH = "persist_version_mismatch"
    PERSIST_TRUNCATED = "persist_truncated"
    PERSIST_FILE_NOT_FOUND = "persist_file_not_found"
    PERSIST_WRITE_FAILED = "persist_write_failed"
    PERSIST_DIGEST_MISMATCH = "persist_digest_mismatch"


# =============================================================================
# EXCEPTION
# =============================================================================


class OrlabError(Exception):
    """
    Exception raised when an Orlab operation fails.

    Numerical modules raise this single type so callers (the harness, the
    dispatcher) can record failures uniformly.

    Attributes:
        message: Human-readable error message.
        code: ErrorCode classifying the failure.
        details: Optional additional details about the error.
    """

    def __init__(
        self,
        message: str,
        code: ErrorCode,
        details: dict[str, Any] | None = None,
    ) -> None:
        super().__init__(message)
        self.message = message
        self.code = code
        self.details = details or {}

    def __str__(self) -> str:
        return f"[{self.code.value}] {self.message}"

    def __repr__(self) -> str:
        return f"OrlabError(code={self.code.value!r}, message={self.message!r})"

    def to_dict(self) -> dict[str, Any]:
        """Error payload in the shape stored by stage results and cell records."""
        error: dict[str, Any] = {"error_code": self.code.value, "message": self.message}
        if self.details:
            error["details"] = self.details
        return error


# =============================================================================
# RUN ENTRY
# =============================================================================


@dataclass(frozen=True)
class RunEntry:
    """
    An immutable record in a run session's trajectory.

    Attributes:
        seq_num: Monotonically increasing sequence number (1-indexed).
        timestamp: UTC timestamp when the entry was created.
        source: Who wrote the entry ("system", a stage id, "harness", ...).
        entry_type: Classification of the entry.
        content: JSON-serializable payload; structure depends on entry_type.

    Example:
        entry = RunEntry(
            seq_num=3,
            timestamp=datetime.now(timezone.utc),
            source="train_value_v1",
            entry_type=EntryType.TRAIN_METRICS,
            content={"step": 1000, "q_loss": 0.12, "v_loss": 0.03},
        )
    """

    seq_num: int
    timestamp: datetime
    source: str
    entry_type: EntryType
    content: dict[str, Any]

    def __post_init__(self) -> None:
        if self.seq_num < 1:
            raise ValueError(f"seq_num must be >= 1, got {self.seq_num}")

        if not self.source or not self.source.strip():
            raise ValueError("source cannot be empty")

        if self.timestamp.tzinfo is None:
            raise ValueError("timestamp must be timezone-aware (use UTC)")

    def to_dict(self) -> dict[str, Any]:
        return {
            "seq_num": self.seq_num,
            "timestamp": self.timestamp.isoformat(),
            "source": self.source,
            "entry_type": self.entry_type.value,
            "content": self.content,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunEntry":
        return cls(
            seq_num=data["seq_num"],
            timestamp=datetime.fromisoformat(data["timestamp"]),
            source=data["source"],
            entry_type=EntryType(data["entry_type"]),
            content=data["content"],
        )


# =============================================================================
# STAGE RESULT
# =============================================================================


@dataclass(frozen=True)
class StageResult:
    """
    The result of invoking a stage capability.

    Returned by Stage.invoke() and collected by the Dispatcher. Carries
    either the result payload or error information, never both.

    Attributes:
        success: True if the capability executed without errors.
        result: JSON-serializable payload (if success=True).
        error: Error information (if success=False): error_code, message,
               optional details.
        stage_id: The ID of the stage that was invoked.
        capability: The capability that was invoked.
    """

    success: bool
    result: Any
    error: dict[str, Any] | None
    stage_id: str
    capability: str

    def __post_init__(self) -> None:
        if self.success and self.error is not None:
            raise ValueError("Successful result should not have error info")

        if not self.success and self.error is None:
            raise ValueError("Failed result must have error info")

    @classmethod
    def ok(cls, result: Any, stage_id: str, capability: str) -> "StageResult":
        """Create a successful result."""
        return cls(
            success=True,
            result=result,
            error=None,
            stage_id=stage_id,
            capability=capability,
        )

    @classmethod
    def fail(
        cls,
        error_code: ErrorCode,
        message: str,
        stage_id: str,
        capability: str,
        details: dict[str, Any] | None = None,
    ) -> "StageResult":
        """Create a failed result with the standard error structure."""
        error: dict[str, Any] = {
            "error_code": error_code.value,
            "message": message,
        }
        if details:
            error["details"] = details

        return cls(
            success=False,
            result=None,
            error=error,
            stage_id=stage_id,
            capability=capability,
        )

    @classmethod
    def from_error(cls, exc: OrlabError, stage_id: str, capability: str) -> "StageResult":
        """Wrap an OrlabError raised by a numerical module."""
        return cls.fail(exc.code, exc.message, stage_id, capability, details=exc.details)

    def to_dict(self) -> dict[str, Any]:
        return {
            "success": self.success,
            "result": self.result,
            "error": self.error,
            "stage_id": self.stage_id,
            "capability": self.capability,
        }


# =============================================================================
# STAGE CALL
# =============================================================================


@dataclass(frozen=True)
class StageCall:
    """
    A request to run one capability (a CLI subcommand) with parameters.

    Attributes:
        capability: Capability name, e.g. "gen-data" or "matrix".
        params: JSON-serializable parameters for the capability.
    """

    capability: str
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.capability or not self.capability.strip():
            raise ValueError("capability cannot be empty")

    def to_dict(self) -> dict[str, Any]:
        return {"capability": self.capability, "params": self.params}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "StageCall":
        return cls(capability=data["capability"], params=data.get("params", {}))


# =============================================================================
# STAGE INFO
# =============================================================================


@dataclass(frozen=True)
class StageInfo:
    """
    Metadata about a stage.

    Attributes:
        stage_id: Unique identifier for the stage.
        name: Human-readable name.
        version: Version string.
        capabilities: Capability names the stage handles.
        description: Optional description.
    """

    stage_id: str
    name: str
    version: str
    capabilities: list[str]
    description: str = ""

    def __post_init__(self) -> None:
        if not self.stage_id or not self.stage_id.strip():
            raise ValueError("stage_id cannot be empty")

        if not self.name or not self.name.strip():
            raise ValueError("name cannot be empty")

        if not self.capabilities:
            raise ValueError("capabilities cannot be empty")

    def to_dict(self) -> dict[str, Any]:
        return {
            "stage_id": self.stage_id,
            "name": self.name,
            "version": self.version,
            "capabilities": self.capabilities,
            "description": self.description,
        }
