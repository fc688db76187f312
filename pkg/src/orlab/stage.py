"""
Stage protocol for Orlab.

A stage is a callable unit of the experiment pipeline (data generation,
value training, extraction, evaluation, harness experiments) with declared
capabilities. Each CLI subcommand is one capability.

The protocol is minimal:
1. info() - metadata (id, name, version, capabilities)
2. invoke() - run a capability against a RunSession with parameters

Stages hold no mutable state of their own: inputs come from params and
files, records go to the session, outputs go to files.
"""

from abc import ABC, abstractmethod
from collections.abc import Callable
from typing import TYPE_CHECKING, Any, Protocol, runtime_checkable

from orlab.types import ErrorCode, OrlabError, StageInfo, StageResult

if TYPE_CHECKING:
    from orlab.session import RunSession


# =============================================================================
# STAGE PROTOCOL (STRUCTURAL TYPING)
# =============================================================================


@runtime_checkable
class StageProtocol(Protocol):
    """Anything with info() and invoke() can be registered with a Dispatcher."""

    def info(self) -> StageInfo: ...

    def invoke(self, capability: str, session: "RunSession", params: dict[str, Any]) -> StageResult: ...


# =============================================================================
# STAGE ABSTRACT BASE CLASS
# =============================================================================


class Stage(ABC):
    """
    Base class for pipeline stages.

    Subclasses implement info() and invoke(). invoke() should not raise for
    expected failures; `_guarded` turns an OrlabError from a numerical
    module into StageResult.from_error and a ValueError/KeyError from
    parameter handling into STAGE_INVALID_PARAMS.

    Example:
        class GenDataStage(Stage):
            def info(self) -> StageInfo:
                return StageInfo("gen_data_v1", "Dataset generation", "1.0.0", ["gen-data"])

            def invoke(self, capability, session, params):
                if capability != "gen-data":
                    return self._unknown_capability(capability)
                return self._guarded(capability, lambda: self._generate(session, params))
    """

    @abstractmethod
    def info(self) -> StageInfo:
        """Static metadata for this stage."""

    @abstractmethod
    def invoke(self, capability: str, session: "RunSession", params: dict[str, Any]) -> StageResult:
        """
        Run a capability.

        Args:
            capability: One of the names returned by info().capabilities.
            session: Run record to read from and append to.
            params: Capability parameters (CLI flags, config file values).

        Returns:
            StageResult: ok with a JSON payload, or fail with error details.
        """

    # =========================================================================
    # HELPER METHODS
    # =========================================================================

    def _guarded(self, capability: str, work: Callable[[], Any]) -> StageResult:
        stage_id = self.info().stage_id
        try:
            return StageResult.ok(work(), stage_id, capability)
        except OrlabError as exc:
            return StageResult.from_error(exc, stage_id, capability)
        except (ValueError, KeyError, TypeError) as exc:
            return self._invalid_params(capability, f"{type(exc).__name__}: {exc}")

    def _unknown_capability(self, capability: str) -> StageResult:
        info = self.info()
        return StageResult.fail(
            error_code=ErrorCode.STAGE_NOT_FOUND,
            message=f"Unknown capability '{capability}'. Available: {info.capabilities}",
            stage_id=info.stage_id,
            capability=capability,
        )

    def _invalid_params(
        self,
        capability: str,
        message: str,
        details: dict[str, Any] | None = None,
    ) -> StageResult:
        return StageResult.fail(
            error_code=ErrorCode.STAGE_INVALID_PARAMS,
            message=message,
            stage_id=self.info().stage_id,
            capability=capability,
            details=details,
        )

    def __repr__(self) -> str:
        info = self.info()
        return f"{self.__class__.__name__}(id={info.stage_id}, caps={info.capabilities})"
