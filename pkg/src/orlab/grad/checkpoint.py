"""
ORLP binary checkpoint format for ParamSets.

Layout (all integers u32 little-endian, all values f64 little-endian):

    b"ORLP" | version | count
    repeated count times:
        name_len | name (UTF-8) | rank | extent * rank | values (row-major)

Round-trips are bit-exact.
"""

import struct
from pathlib import Path

import numpy as np

from orlab.grad.params import ParamSet
from orlab.types import ErrorCode, OrlabError

MAGIC = b"ORLP"
VERSION = 1

_U32 = struct.Struct("<I")


class ByteReader:
    """Cursor over a byte buffer that raises PERSIST_TRUNCATED on short reads."""

    def __init__(self, data: bytes, what: str) -> None:
        self._data = data
        self._pos = 0
        self._what = what

    def take(self, n: int) -> bytes:
        end = self._pos + n
        if end > len(self._data):
            raise OrlabError(
                f"{self._what} truncated at byte {self._pos} (needed {n} more)",
                ErrorCode.PERSIST_TRUNCATED,
            )
        chunk = self._data[self._pos:end]
        self._pos = end
        return chunk

    def u32(self) -> int:
        return int(_U32.unpack(self.take(4))[0])

    def u64(self) -> int:
        return int(struct.unpack("<Q", self.take(8))[0])

    def f64(self) -> float:
        return float(struct.unpack("<d", self.take(8))[0])

    def f64_array(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")

    @property
    def remaining(self) -> int:
        return len(self._data) - self._pos


def encode_params(params: ParamSet) -> bytes:
    parts = [MAGIC, _U32.pack(VERSION), _U32.pack(len(params))]
    for name, tensor in params.items():
        raw = name.encode("utf-8")
        parts.append(_U32.pack(len(raw)))
        parts.append(raw)
        parts.append(_U32.pack(tensor.ndim))
        parts.extend(_U32.pack(extent) for extent in tensor.shape)
        parts.append(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())
    return b"".join(parts)


def decode_params(data: bytes) -> ParamSet:
    reader = ByteReader(data, "ORLP checkpoint")
    if reader.take(4) != MAGIC:
        raise OrlabError("not an ORLP checkpoint", ErrorCode.PERSIST_BAD_MAGIC)
    version = reader.u32()
    if version != VERSION:
        raise OrlabError(
            f"ORLP version {version} is not supported (expected {VERSION})",
            ErrorCode.PERSIST_VERSION_MISMATCH,
        )
    items: list[tuple[str, np.ndarray]] = []
    for _ in range(reader.u32()):
        name = reader.string()
        shape = tuple(reader.u32() for _ in range(reader.u32()))
        values = reader.f64_array(int(np.prod(shape, dtype=np.int64)))
        items.append((name, values.reshape(shape)))
    return ParamSet(items)


def save_params(path: str | Path, params: ParamSet) -> None:
    Path(path).write_bytes(encode_params(params))


def load_params(path: str | Path) -> ParamSet:
    path = Path(path)
    if not path.exists():
        raise OrlabError(f"checkpoint not found: {path}", ErrorCode.PERSIST_FILE_NOT_FOUND)
    return decode_params(path.read_bytes())
