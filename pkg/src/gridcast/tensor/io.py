"""Binary tensor file format.

Layout (all integers little-endian)::

    magic    4 bytes   b"GCTN"
    version  1 byte    1
    order    uint64    d
    extents  uint64    n_1 ... n_d
    data     float64   prod(n_l) values, first index fastest

The same block is embedded in the FieldSeries and model containers, so the
encoder works on byte buffers and the file helpers are thin wrappers.
"""

from __future__ import annotations

import io
import math
import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from gridcast.errors import FormatError
from gridcast.fileio import atomic_write_bytes, read_bytes
from gridcast.tensor.dense import ORDER, DenseTensor, as_tensor

MAGIC = b"GCTN"
VERSION = 1


def _read_exact(stream: BinaryIO, count: int) -> bytes:
    chunk = stream.read(count)
    if len(chunk) != count:
        raise FormatError(f"truncated tensor block: wanted {count} bytes, got {len(chunk)}")
    return chunk


def write_tensor_block(stream: BinaryIO, tensor: DenseTensor | np.ndarray) -> None:
    tensor = as_tensor(tensor)
    if np.iscomplexobj(tensor.data):
        raise FormatError("tensor blocks hold real data; split complex tensors first")
    stream.write(MAGIC)
    stream.write(struct.pack("<B", VERSION))
    stream.write(struct.pack("<Q", tensor.order))
    stream.write(struct.pack(f"<{tensor.order}Q", *tensor.shape))
    stream.write(np.asarray(tensor.data, dtype="<f8").tobytes(order=ORDER))


def read_tensor_block(stream: BinaryIO) -> DenseTensor:
    magic = _read_exact(stream, 4)
    if magic != MAGIC:
        raise FormatError(f"bad tensor magic {magic!r}")
    (version,) = struct.unpack("<B", _read_exact(stream, 1))
    if version != VERSION:
        raise FormatError(f"unsupported tensor format version {version}")
    (order,) = struct.unpack("<Q", _read_exact(stream, 8))
    if order < 1:
        raise FormatError("tensor order must be >= 1")
    shape = struct.unpack(f"<{order}Q", _read_exact(stream, 8 * order))
    count = math.prod(shape)
    values = np.frombuffer(_read_exact(stream, 8 * count), dtype="<f8")
    return DenseTensor(np.reshape(values.astype(np.float64), shape, order=ORDER))


def tensor_to_bytes(tensor: DenseTensor | np.ndarray) -> bytes:
    buffer = io.BytesIO()
    write_tensor_block(buffer, tensor)
    return buffer.getvalue()


def tensor_from_bytes(payload: bytes) -> DenseTensor:
    stream = io.BytesIO(payload)
    tensor = read_tensor_block(stream)
    if stream.read(1):
        raise FormatError("trailing bytes after tensor block")
    return tensor


def save_tensor(path: str | Path, tensor: DenseTensor | np.ndarray) -> Path:
    return atomic_write_bytes(path, tensor_to_bytes(tensor))


def load_tensor(path: str | Path) -> DenseTensor:
    return tensor_from_bytes(read_bytes(path))
