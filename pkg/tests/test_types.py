"""
Tests for core data types in Orlab.

This module tests the fundamental data structures:
- EntryType and ErrorCode enums
- OrlabError: the single exception raised by numerical modules
- RunEntry: Immutable run-session records
- StageResult, StageCall, StageInfo: dispatcher request/result types
- derive_seed / as_generator: seed plumbing
"""

from datetime import datetime, timezone

import numpy as np
import pytest

from orlab.seeding import as_generator, derive_seed
from orlab.types import (
    EntryType,
    ErrorCode,
    OrlabError,
    RunEntry,
    StageCall,
    StageInfo,
    StageResult,
)


# =============================================================================
# ENUM TESTS
# =============================================================================


class TestEnums:
    """Tests for EntryType and ErrorCode."""

    def test_entry_type_compares_with_strings(self) -> None:
        """EntryType inherits from str so JSON payloads stay readable."""
        assert EntryType.CELL_COMPLETED == "cell_completed"
        assert EntryType("run_created") is EntryType.RUN_CREATED

    def test_error_codes_grouped_by_module(self) -> None:
        """Every module family has at least one error code."""
        for prefix in ("grad_", "env_", "data_", "value_", "policy_", "eval_", "diag_", "harness_", "stage_", "persist_"):
            assert any(code.value.startswith(prefix) for code in ErrorCode), prefix

    def test_error_code_from_string(self) -> None:
        assert ErrorCode("data_k_out_of_range") is ErrorCode.DATA_K_OUT_OF_RANGE


# =============================================================================
# ORLAB ERROR TESTS
# =============================================================================


class TestOrlabError:
    """Tests for OrlabError."""

    def test_str_includes_code(self) -> None:
        """str() prefixes the message with the error code."""
        exc = OrlabError("bad k", ErrorCode.DATA_K_OUT_OF_RANGE)
        assert str(exc) == "[data_k_out_of_range] bad k"

    def test_to_dict_omits_empty_details(self) -> None:
        exc = OrlabError("missing", ErrorCode.PERSIST_FILE_NOT_FOUND)
        assert exc.to_dict() == {"error_code": "persist_file_not_found", "message": "missing"}

    def test_to_dict_keeps_details(self) -> None:
        exc = OrlabError("oops", ErrorCode.GRAD_NON_FINITE, {"param": "h0.w"})
        assert exc.to_dict()["details"] == {"param": "h0.w"}


# =============================================================================
# RUN ENTRY TESTS
# =============================================================================


class TestRunEntry:
    """Tests for RunEntry."""

    @pytest.fixture
    def valid_entry(self) -> RunEntry:
        return RunEntry(
            seq_num=1,
            timestamp=datetime.now(timezone.utc),
            source="harness",
            entry_type=EntryType.TRAIN_METRICS,
            content={"step": 10, "q_loss": 0.5},
        )

    def test_entry_is_immutable(self, valid_entry: RunEntry) -> None:
        """Entries cannot be modified after creation."""
        with pytest.raises(AttributeError):
            valid_entry.seq_num = 2  # type: ignore

    def test_seq_num_must_be_positive(self) -> None:
        with pytest.raises(ValueError, match="seq_num must be >= 1"):
            RunEntry(0, datetime.now(timezone.utc), "harness", EntryType.SYSTEM_NOTE, {})

    def test_source_cannot_be_blank(self) -> None:
        with pytest.raises(ValueError, match="source cannot be empty"):
            RunEntry(1, datetime.now(timezone.utc), "   ", EntryType.SYSTEM_NOTE, {})

    def test_timestamp_must_be_timezone_aware(self) -> None:
        """Naive datetimes are rejected."""
        with pytest.raises(ValueError, match="timezone-aware"):
            RunEntry(1, datetime.now(), "harness", EntryType.SYSTEM_NOTE, {})

    def test_dict_roundtrip(self, valid_entry: RunEntry) -> None:
        """to_dict/from_dict preserve every field."""
        restored = RunEntry.from_dict(valid_entry.to_dict())
        assert restored == valid_entry


# =============================================================================
# STAGE RESULT / CALL / INFO TESTS
# =============================================================================


class TestStageResult:
    """Tests for StageResult factories and validation."""

    def test_ok_has_no_error(self) -> None:
        result = StageResult.ok({"path": "x"}, "gen_data_v1", "gen-data")
        assert result.success is True
        assert result.error is None

    def test_fail_builds_error_payload(self) -> None:
        """fail() stores error_code as the enum's string value."""
        result = StageResult.fail(ErrorCode.STAGE_INVALID_PARAMS, "no policy", "eval_v1", "eval")
        assert result.success is False
        assert result.error == {"error_code": "stage_invalid_params", "message": "no policy"}

    def test_from_error_copies_code_and_details(self) -> None:
        exc = OrlabError("bad layout", ErrorCode.ENV_INVALID_LAYOUT, {"row": 2})
        result = StageResult.from_error(exc, "gen_data_v1", "gen-data")
        assert result.error["error_code"] == "env_invalid_layout"
        assert result.error["details"] == {"row": 2}

    def test_success_with_error_rejected(self) -> None:
        with pytest.raises(ValueError):
            StageResult(success=True, result=None, error={"x": 1}, stage_id="s", capability="c")

    def test_failure_without_error_rejected(self) -> None:
        with pytest.raises(ValueError):
            StageResult(success=False, result=None, error=None, stage_id="s", capability="c")


class TestStageCallAndInfo:
    """Tests for StageCall and StageInfo validation."""

    def test_call_roundtrip(self) -> None:
        call = StageCall("matrix", {"out": "runs/a"})
        assert StageCall.from_dict(call.to_dict()) == call

    def test_call_requires_capability(self) -> None:
        with pytest.raises(ValueError, match="capability cannot be empty"):
            StageCall(" ")

    def test_info_requires_capabilities(self) -> None:
        with pytest.raises(ValueError, match="capabilities cannot be empty"):
            StageInfo(stage_id="s", name="S", version="1", capabilities=[])


# =============================================================================
# SEEDING TESTS
# =============================================================================


class TestSeeding:
    """Tests for derive_seed and as_generator."""

    def test_derive_seed_is_stable(self) -> None:
        """Same labels give the same seed on every call."""
        assert derive_seed(3, "eval", 7) == derive_seed(3, "eval", 7)

    def test_derive_seed_separates_labels(self) -> None:
        assert derive_seed(0, "value") != derive_seed(0, "policy")
        assert derive_seed(0, 1) != derive_seed(1, 0)

    def test_derive_seed_fits_63_bits(self) -> None:
        seed = derive_seed("anything")
        assert 0 <= seed < 2**63

    def test_as_generator_passes_generators_through(self) -> None:
        rng = np.random.default_rng(0)
        assert as_generator(rng) is rng

    def test_as_generator_from_int_is_reproducible(self) -> None:
        assert as_generator(5).random() == as_generator(5).random()
