"""PBEV binary tensor files.

Layout (little-endian): magic ``b"PBEV"``, format version ``u16``, rank
``u16``, ``rank`` dimensions as ``u64``, then the row-major float32 payload.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"PBEV"
VERSION = 1
_HEADER = struct.Struct("<4sHH")
_PAYLOAD_DTYPE = np.dtype("<f4")


class TensorFormatError(ValueError):
    """Raised for malformed or truncated PBEV files."""


def encode_tensor(tensor) -> bytes:
    a = np.asarray(tensor)
    if a.size and not np.all(np.isfinite(a)):
        raise ValueError("only finite tensors can be saved")
    header = _HEADER.pack(MAGIC, VERSION, a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape)
    return header + np.ascontiguousarray(a, dtype=_PAYLOAD_DTYPE).tobytes()


def decode_tensor(blob: bytes, expected_shape=None) -> np.ndarray:
    if len(blob) < _HEADER.size:
        raise TensorFormatError(f"file too short for header ({len(blob)} bytes)")
    magic, version, rank = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise TensorFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise TensorFormatError(f"unsupported format version {version}")
    dims_end = _HEADER.size + 8 * rank
    if len(blob) < dims_end:
        raise TensorFormatError("truncated dimension table")
    shape = struct.unpack_from(f"<{rank}Q", blob, _HEADER.size)
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    payload = blob[dims_end:]
    if len(payload) != count * _PAYLOAD_DTYPE.itemsize:
        raise TensorFormatError(
            f"payload has {len(payload)} bytes, expected {count * _PAYLOAD_DTYPE.itemsize} for shape {shape}"
        )
    if expected_shape is not None and tuple(expected_shape) != tuple(shape):
        raise TensorFormatError(f"dimension mismatch: file has {shape}, expected {tuple(expected_shape)}")
    return np.frombuffer(payload, dtype=_PAYLOAD_DTYPE).reshape(shape).astype(np.float32)


def save_tensor(path, tensor) -> None:
    Path(path).write_bytes(encode_tensor(tensor))


def load_tensor(path, expected_shape=None) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes(), expected_shape)
