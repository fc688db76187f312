"""
ORLD dataset files.

Layout (integers little-endian, values f64 little-endian):

    b"ORLD" | version u32 | env-id string | state_dim u32 | action_dim u32
    | sigma_data f64 | shuffle seed u64 | generator seed u64 | goal_dim u32
    | env descriptor string (JSON) | trajectory count u32
    repeated per trajectory, in stored (shuffled) order:
        length u32 | length rows of
            s | a | r | s_next | a_next | terminal | traj_id | t | goal

Strings are a u32 byte length followed by UTF-8. Round-trips are bit-exact;
the split assignment is recomputed from trajectory positions on load.
"""

import json
import logging
import struct
from pathlib import Path

import numpy as np

from orlab.data.dataset import Dataset, DatasetMeta, Trajectory
from orlab.envs.spec import EnvSpec
from orlab.grad.checkpoint import ByteReader
from orlab.types import ErrorCode, OrlabError

logger = logging.getLogger(__name__)

MAGIC = b"ORLD"
VERSION = 1


def _string(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def row_width(state_dim: int, action_dim: int, goal_dim: int) -> int:
    return 2 * state_dim + 2 * action_dim + 4 + goal_dim


def encode_dataset(dataset: Dataset) -> bytes:
    meta = dataset.meta
    ds, da, dg = meta.state_dim, meta.action_dim, meta.goal_dim
    parts = [
        MAGIC,
        struct.pack("<I", VERSION),
        _string(meta.env.env_id.value),
        struct.pack("<II", ds, da),
        struct.pack("<d", meta.sigma_data),
        struct.pack("<QQ", meta.shuffle_seed, meta.generator_seed),
        struct.pack("<I", dg),
        _string(json.dumps(meta.env.to_dict(), sort_keys=True)),
        struct.pack("<I", dataset.n_trajectories),
    ]
    for traj in dataset.trajectories:
        n = len(traj)
        columns = [
            traj.obs,
            traj.actions,
            traj.rewards[:, None],
            traj.next_obs,
            traj.next_actions,
            traj.terminals.astype(np.float64)[:, None],
            np.full((n, 1), float(traj.traj_id)),
            np.arange(n, dtype=np.float64)[:, None],
        ]
        if dg:
            columns.append(np.broadcast_to(traj.goal, (n, dg)))
        rows = np.hstack(columns)
        parts.append(struct.pack("<I", n))
        parts.append(np.ascontiguousarray(rows, dtype="<f8").tobytes())
    return b"".join(parts)


def decode_dataset(data: bytes) -> Dataset:
    """
    Parse ORLD bytes.

    Raises:
        OrlabError: PERSIST_BAD_MAGIC, PERSIST_VERSION_MISMATCH or
            PERSIST_TRUNCATED.
    """
    reader = ByteReader(data, "ORLD dataset")
    if reader.take(4) != MAGIC:
        raise OrlabError("not an ORLD dataset", ErrorCode.PERSIST_BAD_MAGIC)
    version = reader.u32()
    if version != VERSION:
        raise OrlabError(
            f"ORLD version {version} is not supported (expected {VERSION})",
            ErrorCode.PERSIST_VERSION_MISMATCH,
        )
    env_id = reader.string()
    ds, da = reader.u32(), reader.u32()
    sigma = reader.f64()
    shuffle_seed, generator_seed = reader.u64(), reader.u64()
    dg = reader.u32()
    env = EnvSpec.from_dict(json.loads(reader.string()))
    if env.env_id.value != env_id or (env.state_dim, env.action_dim, env.goal_dim) != (ds, da, dg):
        raise OrlabError(
            "ORLD header disagrees with its environment descriptor",
            ErrorCode.PERSIST_BAD_MAGIC,
            details={"env_id": env_id, "dims": [ds, da, dg]},
        )
    width = row_width(ds, da, dg)
    trajectories = []
    for _ in range(reader.u32()):
        n = reader.u32()
        rows = reader.f64_array(n * width).reshape(n, width)
        cut = np.cumsum([ds, da, 1, ds, da, 1, 1, 1])
        s, a, r, s2, a2, term, tid, _t, goal = np.split(rows, cut, axis=1)
        trajectories.append(
            Trajectory(
                obs=s,
                actions=a,
                rewards=r[:, 0].copy(),
                next_obs=s2,
                next_actions=a2,
                terminals=term[:, 0] != 0.0,
                traj_id=int(tid[0, 0]),
                goal=goal[0].copy() if dg else None,
            )
        )
    if reader.remaining:
        raise OrlabError(f"{reader.remaining} trailing bytes after ORLD payload", ErrorCode.PERSIST_TRUNCATED)
    meta = DatasetMeta(env=env, sigma_data=sigma, shuffle_seed=shuffle_seed, generator_seed=generator_seed)
    return Dataset(trajectories, meta)


def save_dataset(path: str | Path, dataset: Dataset) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_dataset(dataset))
    logger.info("wrote %r to %s", dataset, path)


def load_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise OrlabError(f"dataset not found: {path}", ErrorCode.PERSIST_FILE_NOT_FOUND)
    return decode_dataset(path.read_bytes())
