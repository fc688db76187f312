"""
Dispatcher for Orlab.

Routes capability calls (CLI subcommands) to registered stages and runs
them in order, stopping at the first failure. Every call is bracketed by
STAGE_STARTED and STAGE_COMPLETED / STAGE_FAILED entries in the run session.

Example:
    dispatcher = Dispatcher()
    for stage in default_stages():
        dispatcher.register(stage)
    result = dispatcher.dispatch_sequence([StageCall("gen-data", params)], session)
"""

import logging
from typing import TYPE_CHECKING, Any

from orlab.stage import StageProtocol
from orlab.types import EntryType, ErrorCode, StageCall, StageInfo, StageResult

if TYPE_CHECKING:
    from orlab.session import RunSession

logger = logging.getLogger(__name__)


# =============================================================================
# DISPATCH RESULT
# =============================================================================


class DispatchResult:
    """
    Results of a dispatched call sequence.

    Attributes:
        results: StageResult per executed call.
        success: True if every call succeeded.
        failed_at: Index of the first failed call, or None.
        error: Error payload of the first failed call, or None.
    """

    def __init__(self, results: list[StageResult]) -> None:
        self._results = results
        self._failed_at: int | None = next((i for i, r in enumerate(results) if not r.success), None)

    @property
    def results(self) -> list[StageResult]:
        return self._results

    @property
    def success(self) -> bool:
        return self._failed_at is None

    @property
    def failed_at(self) -> int | None:
        return self._failed_at

    @property
    def error(self) -> dict[str, Any] | None:
        if self._failed_at is None:
            return None
        return self._results[self._failed_at].error

    @property
    def executed_count(self) -> int:
        return len(self._results)

    def __repr__(self) -> str:
        if self.success:
            return f"DispatchResult(success=True, executed={self.executed_count})"
        return (
            f"DispatchResult(success=False, failed_at={self.failed_at}, "
            f"error_code={self.error['error_code'] if self.error else None})"
        )


# =============================================================================
# DISPATCHER
# =============================================================================


class Dispatcher:
    """
    Capability registry plus sequential, fail-fast execution.

    A capability maps to exactly one stage; registering a second stage for
    the same capability replaces the first.
    """

    def __init__(self) -> None:
        self._capability_to_stage: dict[str, StageProtocol] = {}
        self._stage_info: dict[str, StageInfo] = {}

    # =========================================================================
    # REGISTRATION
    # =========================================================================

    def register(self, stage: StageProtocol) -> None:
        info = stage.info()
        self._stage_info[info.stage_id] = info
        for capability in info.capabilities:
            self._capability_to_stage[capability] = stage

    def unregister(self, stage_id: str) -> bool:
        if stage_id not in self._stage_info:
            return False
        for capability in self._stage_info[stage_id].capabilities:
            current = self._capability_to_stage.get(capability)
            if current is not None and current.info().stage_id == stage_id:
                del self._capability_to_stage[capability]
        del self._stage_info[stage_id]
        return True

    # =========================================================================
    # INTROSPECTION
    # =========================================================================

    def get_capabilities(self) -> list[str]:
        return sorted(self._capability_to_stage)

    def get_stage_for_capability(self, capability: str) -> StageProtocol | None:
        return self._capability_to_stage.get(capability)

    def has_capability(self, capability: str) -> bool:
        return capability in self._capability_to_stage

    # =========================================================================
    # DISPATCH
    # =========================================================================

    def dispatch_single(self, call: StageCall | dict[str, Any], session: "RunSession", index: int = 0) -> StageResult:
        """
        Run one call. Unexpected exceptions become STAGE_INVOCATION_FAILED.
        """
        if isinstance(call, dict):
            call = StageCall.from_dict(call)

        session.append(
            source="dispatcher",
            entry_type=EntryType.STAGE_STARTED,
            content={"step_index": index, "capability": call.capability, "params": call.params},
        )

        stage = self.get_stage_for_capability(call.capability)
        if stage is None:
            result = StageResult.fail(
                error_code=ErrorCode.STAGE_NOT_FOUND,
                message=f"No stage registered for capability '{call.capability}'",
                stage_id="dispatcher",
                capability=call.capability,
                details={"available_capabilities": self.get_capabilities(), "step_index": index},
            )
        else:
            try:
                result = stage.invoke(call.capability, session, call.params)
            except Exception as e:
                logger.exception("stage for '%s' raised", call.capability)
                result = StageResult.fail(
                    error_code=ErrorCode.STAGE_INVOCATION_FAILED,
                    message=f"Stage raised exception: {type(e).__name__}: {e}",
                    stage_id=stage.info().stage_id,
                    capability=call.capability,
                    details={
                        "exception_type": type(e).__name__,
                        "exception_message": str(e),
                        "step_index": index,
                    },
                )

        session.append(
            source="dispatcher",
            entry_type=EntryType.STAGE_COMPLETED if result.success else EntryType.STAGE_FAILED,
            content={
                "step_index": index,
                "capability": call.capability,
                "success": result.success,
                "result_summary": str(result.result if result.success else result.error)[:200],
            },
        )
        return result

    def dispatch_sequence(self, calls: list[StageCall] | list[dict[str, Any]], session: "RunSession") -> DispatchResult:
        """Run calls in order; stop at the first failure."""
        results: list[StageResult] = []
        for i, call in enumerate(calls):
            result = self.dispatch_single(call, session, index=i)
            results.append(result)
            if not result.success:
                break
        return DispatchResult(results)
