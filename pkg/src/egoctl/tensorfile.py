"""``EGOC`` binary tensor files.

Layout (little-endian)::

    magic   4 bytes  b"EGOC"
    version u16      1
    dtype   u16      1 = float32
    rank    u32
    dims    u64 x rank
    payload float32 x prod(dims), row-major
    crc32   u32      over every preceding byte
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"EGOC"
VERSION = 1
DTYPE_F32 = 1


class TensorFileError(ValueError):
    pass


def encode(array) -> bytes:
    a = np.asarray(array, dtype="<f4", order="C")
    head = MAGIC + struct.pack("<HHI", VERSION, DTYPE_F32, a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape)
    body = head + a.tobytes(order="C")
    return body + struct.pack("<I", zlib.crc32(body))


def decode(blob: bytes) -> np.ndarray:
    if len(blob) < 16:
        raise TensorFileError("file too short")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise TensorFileError("CRC mismatch")
    if body[:4] != MAGIC:
        raise TensorFileError(f"bad magic {body[:4]!r}")
    version, dtype, rank = struct.unpack("<HHI", body[4:12])
    if version != VERSION:
        raise TensorFileError(f"unsupported version {version}")
    if dtype != DTYPE_F32:
        raise TensorFileError(f"unsupported dtype tag {dtype}")
    off = 12 + 8 * rank
    if len(body) < off:
        raise TensorFileError("truncated header")
    dims = struct.unpack(f"<{rank}Q", body[12:off])
    payload = body[off:]
    if len(payload) != 4 * int(np.prod(dims, dtype=np.int64)):
        raise TensorFileError(f"payload is {len(payload)} bytes, dims {dims} need {4 * int(np.prod(dims))}")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()


def write(path, array) -> tuple[int, ...]:
    blob = encode(array)
    Path(path).write_bytes(blob)
    return tuple(np.shape(array))


def read(path) -> np.ndarray:
    return decode(Path(path).read_bytes())
