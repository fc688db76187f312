"""
Run session for Orlab.

A RunSession is the audit record of one CLI invocation or harness run. It
contains:

1. State: a versioned key-value store of JSON data (configs, config hashes,
   results, metrics summaries)
2. Trajectory: an append-only log of typed entries (stages started and
   finished, training metrics, evaluation results, cell records)
3. Artifacts: named binary blobs (dataset and checkpoint bytes) with their
   sha256 digests, so a run can later prove which checkpoint it used

Everything is persisted to a single SQLite file, `<out>/run.orlab` by
convention.

Key Invariants:
- Trajectory is append-only and strictly ordered by seq_num
- State version increases by one on every set()
- Values handed out are deep copies, never live references
- save()/load() preserves state, trajectory and artifacts exactly
- Every artifact carries the sha256 of its bytes; load() rejects a file
  whose artifact bytes no longer match
"""

import copy
import hashlib
import json
import sqlite3
import uuid
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from orlab.types import EntryType, ErrorCode, OrlabError, RunEntry

# =============================================================================
# CONFIGURATION
# =============================================================================


# Datasets at the largest desk-scale sizes stay well below this
DEFAULT_MAX_ARTIFACT_SIZE = 256 * 1024 * 1024

SCHEMA_VERSION = 1

RUN_FILE_NAME = "run.orlab"


# =============================================================================
# RUN SESSION
# =============================================================================


class RunSession:
    """
    The unit of record keeping for an experiment run.

    Thread Safety:
        Not thread-safe. The harness collects results from its worker pool
        and records them from the calling thread only.

    Attributes:
        run_id: Unique identifier for this run (UUID unless given).
        max_artifact_size: Maximum allowed artifact size in bytes.

    Example:
        session = RunSession()
        session.set("config", config.to_dict())
        session.append("harness", EntryType.CELL_COMPLETED, record)
        session.save(out_dir / RUN_FILE_NAME)
        restored = RunSession.load(out_dir / RUN_FILE_NAME)
    """

    def __init__(
        self,
        run_id: str | None = None,
        max_artifact_size: int = DEFAULT_MAX_ARTIFACT_SIZE,
    ) -> None:
        self._run_id = run_id or str(uuid.uuid4())
        self._max_artifact_size = max_artifact_size

        self._state: dict[str, Any] = {}
        self._state_version: int = 0

        self._trajectory: list[RunEntry] = []
        self._next_seq_num: int = 1

        self._artifacts: dict[str, bytes] = {}
        self._digests: dict[str, str] = {}

        self._append_internal(
            source="system",
            entry_type=EntryType.RUN_CREATED,
            content={
                "run_id": self._run_id,
                "max_artifact_size": self._max_artifact_size,
                "schema_version": SCHEMA_VERSION,
            },
        )

    # =========================================================================
    # PROPERTIES
    # =========================================================================

    @property
    def run_id(self) -> str:
        return self._run_id

    @property
    def max_artifact_size(self) -> int:
        return self._max_artifact_size

    # =========================================================================
    # STATE
    # =========================================================================

    def get(self, key: str, default: Any = None) -> Any:
        """Deep copy of the value under `key`, or `default`."""
        if key not in self._state:
            return default
        return copy.deepcopy(self._state[key])

    def set(self, key: str, value: Any) -> int:
        """
        Store a JSON-serializable value and record the change.

        Returns:
            int: The new state version.

        Raises:
            ValueError: If the key is empty or the value is not JSON data.
        """
        if not key or not isinstance(key, str):
            raise ValueError("Key must be a non-empty string")
        try:
            json.dumps(value)
        except (TypeError, ValueError) as e:
            raise ValueError(f"Value must be JSON-serializable: {e}") from e

        old_value = self._state.get(key)
        self._state[key] = copy.deepcopy(value)
        self._state_version += 1
        self._append_internal(
            source="system",
            entry_type=EntryType.STATE_SET,
            content={
                "key": key,
                "old_value": old_value,
                "new_value": value,
                "state_version": self.get_state_version(),
            },
        )
        return self._state_version

    def get_state_version(self) -> int:
        return self._state_version

    # =========================================================================
    # TRAJECTORY
    # =========================================================================

    def append(self, source: str, entry_type: EntryType, content: dict[str, Any]) -> int:
        """
        Append a typed entry to the trajectory.

        Args:
            source: Who is recording ("harness", a stage id, ...).
            entry_type: Classification of the entry.
            content: JSON-serializable payload.

        Returns:
            int: The sequence number assigned to the entry.

        Raises:
            ValueError: If source is empty or content is not serializable.
        """
        return self._append_internal(source, entry_type, content)

    def _append_internal(self, source: str, entry_type: EntryType, content: dict[str, Any]) -> int:
        try:
            json.dumps(content)
        except (TypeError, ValueError) as e:
            raise ValueError(f"Content must be JSON-serializable: {e}") from e

        entry = RunEntry(
            seq_num=self._next_seq_num,
            timestamp=datetime.now(timezone.utc),
            source=source,
            entry_type=entry_type,
            content=copy.deepcopy(content),
        )
        self._trajectory.append(entry)
        self._next_seq_num += 1
        return entry.seq_num

    def get_trajectory(self, limit: int | None = None) -> list[RunEntry]:
        """Entries oldest first; with `limit`, only the most recent N."""
        if limit is None:
            return list(self._trajectory)
        if limit <= 0:
            return []
        return list(self._trajectory[-limit:])

    def entries(self, entry_type: EntryType) -> list[RunEntry]:
        return [e for e in self._trajectory if e.entry_type is entry_type]

    def get_trajectory_length(self) -> int:
        return len(self._trajectory)

    # =========================================================================
    # ARTIFACTS
    # =========================================================================

    def write_artifact(self, name: str, data: bytes) -> None:
        """
        Store a binary artifact and record its size and sha256.

        Raises:
            ValueError: If name is empty or data exceeds max_artifact_size.
            TypeError: If data is not bytes.
        """
        if not name or not isinstance(name, str):
            raise ValueError("Artifact name must be a non-empty string")
        if not isinstance(data, bytes):
            raise TypeError(f"Artifact data must be bytes, got {type(data).__name__}")
        if len(data) > self._max_artifact_size:
            raise ValueError(
                f"Artifact size ({len(data)} bytes) exceeds maximum "
                f"({self._max_artifact_size} bytes)"
            )

        is_update = name in self._artifacts
        self._artifacts[name] = data
        self._digests[name] = hashlib.sha256(data).hexdigest()
        self._append_internal(
            source="system",
            entry_type=EntryType.ARTIFACT_WRITTEN,
            content={"name": name, "size": len(data), "sha256": self._digests[name], "is_update": is_update},
        )

    def read_artifact(self, name: str) -> bytes:
        if name not in self._artifacts:
            raise KeyError(f"Artifact not found: {name}")
        return self._artifacts[name]

    def artifact_digest(self, name: str) -> str:
        """Hex sha256 of the stored artifact bytes."""
        if name not in self._digests:
            raise KeyError(f"Artifact not found: {name}")
        return self._digests[name]

    def list_artifacts(self) -> list[str]:
        return sorted(self._artifacts)

    # =========================================================================
    # SUMMARY
    # =========================================================================

    def summary(self, depth: int = 10) -> dict[str, Any]:
        """Deep-copied overview: state, recent entries, artifact names."""
        return {
            "run_id": self._run_id,
            "state": copy.deepcopy(self._state),
            "state_version": self.get_state_version(),
            "trajectory": [e.to_dict() for e in self.get_trajectory(limit=depth)],
            "trajectory_total_length": self.get_trajectory_length(),
            "artifacts": {name: self._digests[name] for name in self.list_artifacts()},
        }

    # =========================================================================
    # PERSISTENCE
    # =========================================================================

    def save(self, path: str | Path) -> Path:
        """
        Write the run to one SQLite file, replacing its previous contents.

        The write happens inside a single transaction.
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self._append_internal(
            source="system",
            entry_type=EntryType.RUN_SAVED,
            content={"path": str(path)},
        )

        conn = sqlite3.connect(path)
        try:
            self._create_schema(conn)
            with conn:
                self._save_metadata(conn)
                conn.execute("DELETE FROM state")
                conn.executemany(
                    "INSERT INTO state (key, value_json) VALUES (?, ?)",
                    [(k, json.dumps(v)) for k, v in self._state.items()],
                )
                conn.execute("DELETE FROM trajectory")
                conn.executemany(
                    """INSERT INTO trajectory
                       (seq_num, timestamp, source, entry_type, content_json)
                       VALUES (?, ?, ?, ?, ?)""",
                    [
                        (
                            e.seq_num,
                            e.timestamp.isoformat(),
                            e.source,
                            e.entry_type.value,
                            json.dumps(e.content),
                        )
                        for e in self._trajectory
                    ],
                )
                conn.execute("DELETE FROM artifacts")
                conn.executemany(
                    "INSERT INTO artifacts (name, sha256, data) VALUES (?, ?, ?)",
                    [(name, self._digests[name], data) for name, data in self._artifacts.items()],
                )
        finally:
            conn.close()
        return path

    @classmethod
    def load(cls, path: str | Path) -> "RunSession":
        """
        Restore a run saved with save().

        Raises:
            OrlabError: PERSIST_FILE_NOT_FOUND if the file is missing,
                PERSIST_VERSION_MISMATCH on a schema version mismatch,
                PERSIST_DIGEST_MISMATCH if an artifact was altered on disk.
        """
        path = Path(path)
        if not path.exists():
            raise OrlabError(f"Run file not found: {path}", ErrorCode.PERSIST_FILE_NOT_FOUND)

        conn = sqlite3.connect(path)
        try:
            metadata = dict(conn.execute("SELECT key, value FROM metadata").fetchall())
            schema_version = int(metadata.get("schema_version", "0"))
            if schema_version != SCHEMA_VERSION:
                raise OrlabError(
                    f"Schema version mismatch: file has {schema_version}, expected {SCHEMA_VERSION}",
                    ErrorCode.PERSIST_VERSION_MISMATCH,
                )

            session = cls(
                run_id=metadata["run_id"],
                max_artifact_size=int(metadata["max_artifact_size"]),
            )
            session._state = {
                key: json.loads(value) for key, value in conn.execute("SELECT key, value_json FROM state")
            }
            session._state_version = int(metadata["state_version"])
            session._trajectory = [
                RunEntry(
                    seq_num=seq_num,
                    timestamp=datetime.fromisoformat(timestamp),
                    source=source,
                    entry_type=EntryType(entry_type),
                    content=json.loads(content_json),
                )
                for seq_num, timestamp, source, entry_type, content_json in conn.execute(
                    "SELECT seq_num, timestamp, source, entry_type, content_json FROM trajectory ORDER BY seq_num"
                )
            ]
            session._next_seq_num = session._trajectory[-1].seq_num + 1 if session._trajectory else 1
            for name, digest, data in conn.execute("SELECT name, sha256, data FROM artifacts"):
                if hashlib.sha256(data).hexdigest() != digest:
                    raise OrlabError(
                        f"Artifact {name!r} in {path} does not match its recorded sha256",
                        ErrorCode.PERSIST_DIGEST_MISMATCH,
                    )
                session._artifacts[name] = data
                session._digests[name] = digest
        finally:
            conn.close()

        session._append_internal(
            source="system",
            entry_type=EntryType.RUN_LOADED,
            content={"path": str(path)},
        )
        return session

    def _create_schema(self, conn: sqlite3.Connection) -> None:
        conn.executescript("""
            CREATE TABLE IF NOT EXISTS metadata (
                key TEXT PRIMARY KEY,
                value TEXT NOT NULL
            );
            CREATE TABLE IF NOT EXISTS state (
                key TEXT PRIMARY KEY,
                value_json TEXT NOT NULL
            );
            CREATE TABLE IF NOT EXISTS trajectory (
                seq_num INTEGER PRIMARY KEY,
                timestamp TEXT NOT NULL,
                source TEXT NOT NULL,
                entry_type TEXT NOT NULL,
                content_json TEXT NOT NULL
            );
            CREATE TABLE IF NOT EXISTS artifacts (
                name TEXT PRIMARY KEY,
                sha256 TEXT NOT NULL,
                data BLOB NOT NULL
            );
        """)

    def _save_metadata(self, conn: sqlite3.Connection) -> None:
        metadata = {
            "schema_version": str(SCHEMA_VERSION),
            "run_id": self._run_id,
            "max_artifact_size": str(self._max_artifact_size),
            "state_version": str(self._state_version),
        }
        conn.execute("DELETE FROM metadata")
        conn.executemany("INSERT INTO metadata (key, value) VALUES (?, ?)", metadata.items())

    def __repr__(self) -> str:
        return (
            f"RunSession(id={self._run_id[:8]}..., "
            f"state_keys={len(self._state)}, "
            f"trajectory_len={len(self._trajectory)}, "
            f"artifacts={len(self._artifacts)})"
        )
