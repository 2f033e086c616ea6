"""Binary container for named float32 tensors.

Layout, all integers little-endian:

    magic   4 bytes  b"AMBT"
    version u16      currently 1
    count   u32      number of tensor records
    then per record:
      name_len u16, name UTF-8, rank u8, dims u32 * rank, payload float32 LE

Records are written sequentially, so a byte offset uniquely addresses one
tensor; dataset manifests store these offsets to allow streaming reads
without parsing whole files. Writing is fully deterministic (no clocks, no
padding), which the reproducibility contract relies on.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"AMBT"
VERSION = 1
_HEADER = struct.Struct("<HI")
_NAME_LEN = struct.Struct("<H")
_RANK = struct.Struct("<B")


class TensorFileError(ValueError):
    pass


def _encode_record(name: str, array: np.ndarray) -> bytes:
    data = np.ascontiguousarray(array, dtype="<f4")
    name_b = name.encode("utf-8")
    if len(name_b) > 0xFFFF:
        raise TensorFileError(f"tensor name too long ({len(name_b)} bytes)")
    if data.ndim > 0xFF:
        raise TensorFileError(f"rank {data.ndim} exceeds container limit")
    parts = [
        _NAME_LEN.pack(len(name_b)),
        name_b,
        _RANK.pack(data.ndim),
        struct.pack(f"<{data.ndim}I", *data.shape),
        data.tobytes(),
    ]
    return b"".join(parts)


class TensorWriter:
    """Append named tensors to a container file; use as a context manager."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fh = open(self.path, "wb")
        self._count = 0
        self._fh.write(MAGIC)
        self._fh.write(_HEADER.pack(VERSION, 0))

    def add(self, name: str, array: np.ndarray) -> tuple[int, int]:
        """Write one tensor; returns (byte offset, crc32 of the record bytes)."""
        record = _encode_record(name, array)
        offset = self._fh.tell()
        self._fh.write(record)
        self._count += 1
        return offset, zlib.crc32(record)

    def close(self) -> None:
        if self._fh.closed:
            return
        self._fh.seek(len(MAGIC))
        self._fh.write(_HEADER.pack(VERSION, self._count))
        self._fh.close()

    def __enter__(self) -> "TensorWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_tensors(path: str | Path, tensors: dict[str, np.ndarray]) -> dict[str, int]:
    """Write a mapping of tensors in iteration order; returns name -> offset."""
    offsets = {}
    with TensorWriter(path) as w:
        for name, arr in tensors.items():
            offsets[name], _ = w.add(name, arr)
    return offsets


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise TensorFileError(f"truncated container while reading {what}")
    return buf


def read_tensor_at(fh, offset: int, expected_crc: int | None = None) -> tuple[str, np.ndarray]:
    """Read the single tensor record starting at ``offset`` of an open file."""
    fh.seek(offset)
    (name_len,) = _NAME_LEN.unpack(_read_exact(fh, 2, f"name length at {offset}"))
    name = _read_exact(fh, name_len, f"name at {offset}").decode("utf-8")
    (rank,) = _RANK.unpack(_read_exact(fh, 1, f"rank of {name!r}"))
    dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, f"dims of {name!r}"))
    n_values = int(np.prod(dims, dtype=np.int64)) if rank else 1
    payload = _read_exact(fh, 4 * n_values, f"payload of {name!r}")
    if expected_crc is not None:
        end = fh.tell()
        fh.seek(offset)
        record = _read_exact(fh, end - offset, f"record bytes of {name!r}")
        if zlib.crc32(record) != expected_crc:
            raise TensorFileError(f"checksum mismatch for tensor {name!r} at offset {offset}")
    array = np.frombuffer(payload, dtype="<f4").reshape(dims)
    return name, array.copy()


def read_tensors(path: str | Path) -> dict[str, np.ndarray]:
    """Read every tensor of a container, preserving write order."""
    out: dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != MAGIC:
            raise TensorFileError(f"{path}: bad magic {magic!r}")
        version, count = _HEADER.unpack(_read_exact(fh, _HEADER.size, "header"))
        if version != VERSION:
            raise TensorFileError(f"{path}: unsupported version {version}")
        for i in range(count):
            try:
                name, arr = read_tensor_at(fh, fh.tell())
            except TensorFileError as e:
                raise TensorFileError(f"{path}: record {i}: {e}") from None
            if name in out:
                raise TensorFileError(f"{path}: duplicate tensor name {name!r}")
            out[name] = arr
    return out
