"""Versioned binary container for fitted models.

Layout (little-endian)::

    magic    4 bytes   b"GCMF"
    version  1 byte    1
    kind     1 byte    1 = dmd, 2 = ttdmd, 3 = mar

DMD and TT-DMD bodies::

    dt              float64
    requested_rank  int64  (-1 when energy-based)
    p               uint64
    eigenvalues     2p float64, interleaved (re, im)
    modes           tensor block (real part) + tensor block (imag part)
    singular values tensor block

TT-DMD additionally stores the reduced operator, ``M^T P``, ``Q N^T S^-1`` and
the eigenvectors as real/imag block pairs, followed by a flag byte and the
two anchor snapshots when present.

MAR body::

    M, N            uint64
    A, B            float64, row-major
    ridge           float64
    iterations      uint64
    converged       uint8
    loss count      uint64, then that many float64
"""

from __future__ import annotations

import io
import struct
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

from gridcast.errors import FormatError
from gridcast.fileio import atomic_write_bytes, read_bytes
from gridcast.models.dmd import DmdModel
from gridcast.models.mar import MarModel
from gridcast.models.ttdmd import TtDmdModel
from gridcast.tensor.dense import DenseTensor
from gridcast.tensor.io import read_tensor_block, write_tensor_block

MAGIC = b"GCMF"
VERSION = 1
KIND_DMD = 1
KIND_TTDMD = 2
KIND_MAR = 3

Model = Union[DmdModel, TtDmdModel, MarModel]


def _unpack(stream: BinaryIO, fmt: str) -> tuple:
    size = struct.calcsize(fmt)
    chunk = stream.read(size)
    if len(chunk) != size:
        raise FormatError("truncated model file")
    return struct.unpack(fmt, chunk)


def _write_complex(stream: BinaryIO, values: np.ndarray) -> None:
    values = np.asarray(values)
    write_tensor_block(stream, np.real(values))
    write_tensor_block(stream, np.imag(values))


def _read_complex(stream: BinaryIO) -> np.ndarray:
    real = read_tensor_block(stream).data
    imag = read_tensor_block(stream).data
    if real.shape != imag.shape:
        raise FormatError("real and imaginary blocks differ in shape")
    return real + 1j * imag


def _write_spectrum(stream: BinaryIO, eigenvalues: np.ndarray, dt: float,
                    requested_rank: int | None) -> None:
    stream.write(struct.pack("<d", dt))
    stream.write(struct.pack("<q", -1 if requested_rank is None else requested_rank))
    stream.write(struct.pack("<Q", eigenvalues.size))
    interleaved = np.empty(2 * eigenvalues.size)
    interleaved[0::2] = eigenvalues.real
    interleaved[1::2] = eigenvalues.imag
    stream.write(interleaved.astype("<f8").tobytes())


def _read_spectrum(stream: BinaryIO) -> tuple[np.ndarray, float, int | None]:
    (dt,) = _unpack(stream, "<d")
    (requested,) = _unpack(stream, "<q")
    (count,) = _unpack(stream, "<Q")
    raw = stream.read(16 * count)
    if len(raw) != 16 * count:
        raise FormatError("truncated eigenvalue block")
    interleaved = np.frombuffer(raw, dtype="<f8").astype(float)
    eigenvalues = interleaved[0::2] + 1j * interleaved[1::2]
    return eigenvalues, dt, None if requested < 0 else int(requested)


def _write_dmd(stream: BinaryIO, model: DmdModel) -> None:
    _write_spectrum(stream, model.eigenvalues, model.dt, model.requested_rank)
    _write_complex(stream, model.modes)
    write_tensor_block(stream, model.singular_values)


def _read_dmd(stream: BinaryIO) -> DmdModel:
    eigenvalues, dt, requested = _read_spectrum(stream)
    modes = _read_complex(stream)
    singular_values = read_tensor_block(stream).data
    return DmdModel(
        modes=modes,
        eigenvalues=eigenvalues,
        dt=dt,
        requested_rank=requested or 0,
        singular_values=np.array(singular_values),
    )


def _write_ttdmd(stream: BinaryIO, model: TtDmdModel) -> None:
    _write_spectrum(stream, model.eigenvalues, model.dt, model.requested_rank)
    _write_complex(stream, model.mode_tensor.data)
    write_tensor_block(stream, model.singular_values)
    for matrix in (model.reduced_operator, model.cross_gram, model.time_factor,
                   model.eigenvectors):
        _write_complex(stream, matrix)
    flags = (model.anchor_first is not None) | ((model.anchor_last is not None) << 1)
    stream.write(struct.pack("<B", flags))
    if model.anchor_first is not None:
        write_tensor_block(stream, model.anchor_first)
    if model.anchor_last is not None:
        write_tensor_block(stream, model.anchor_last)


def _read_ttdmd(stream: BinaryIO) -> TtDmdModel:
    eigenvalues, dt, requested = _read_spectrum(stream)
    mode_tensor = _read_complex(stream)
    singular_values = np.array(read_tensor_block(stream).data)
    reduced, cross_gram, time_factor, eigenvectors = (_read_complex(stream) for _ in range(4))
    (flags,) = _unpack(stream, "<B")
    anchor_first = np.array(read_tensor_block(stream).data) if flags & 1 else None
    anchor_last = np.array(read_tensor_block(stream).data) if flags & 2 else None
    return TtDmdModel(
        mode_tensor=DenseTensor(mode_tensor),
        eigenvalues=eigenvalues,
        dt=dt,
        requested_rank=requested,
        singular_values=singular_values,
        reduced_operator=reduced,
        cross_gram=cross_gram,
        time_factor=time_factor,
        eigenvectors=eigenvectors,
        anchor_first=anchor_first,
        anchor_last=anchor_last,
    )


def _write_mar(stream: BinaryIO, model: MarModel) -> None:
    m, n = model.field_shape
    stream.write(struct.pack("<QQ", m, n))
    stream.write(np.asarray(model.a, dtype="<f8").tobytes(order="C"))
    stream.write(np.asarray(model.b, dtype="<f8").tobytes(order="C"))
    stream.write(struct.pack("<dQB", model.ridge, model.iterations_run, int(model.converged)))
    stream.write(struct.pack("<Q", len(model.loss_history)))
    stream.write(np.asarray(model.loss_history, dtype="<f8").tobytes())


def _read_mar(stream: BinaryIO) -> MarModel:
    m, n = _unpack(stream, "<QQ")
    a = np.array(_unpack(stream, f"<{m * m}d"), dtype=float).reshape(m, m)
    b = np.array(_unpack(stream, f"<{n * n}d"), dtype=float).reshape(n, n)
    ridge, iterations, converged = _unpack(stream, "<dQB")
    (count,) = _unpack(stream, "<Q")
    history = _unpack(stream, f"<{count}d")
    return MarModel(a=a, b=b, loss_history=history, iterations_run=iterations,
                    converged=bool(converged), ridge=ridge)


def model_to_bytes(model: Model) -> bytes:
    buffer = io.BytesIO()
    buffer.write(MAGIC)
    buffer.write(struct.pack("<B", VERSION))
    if isinstance(model, DmdModel):
        buffer.write(struct.pack("<B", KIND_DMD))
        _write_dmd(buffer, model)
    elif isinstance(model, TtDmdModel):
        buffer.write(struct.pack("<B", KIND_TTDMD))
        _write_ttdmd(buffer, model)
    elif isinstance(model, MarModel):
        buffer.write(struct.pack("<B", KIND_MAR))
        _write_mar(buffer, model)
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return buffer.getvalue()


def model_from_bytes(payload: bytes) -> Model:
    stream = io.BytesIO(payload)
    magic = stream.read(4)
    if magic != MAGIC:
        raise FormatError(f"bad model magic {magic!r}")
    (version,) = _unpack(stream, "<B")
    if version != VERSION:
        raise FormatError(f"unsupported model format version {version}")
    (kind,) = _unpack(stream, "<B")
    readers = {KIND_DMD: _read_dmd, KIND_TTDMD: _read_ttdmd, KIND_MAR: _read_mar}
    if kind not in readers:
        raise FormatError(f"unknown model kind {kind}")
    model = readers[kind](stream)
    if stream.read(1):
        raise FormatError("trailing bytes after model body")
    return model


def save_model(path: str | Path, model: Model) -> Path:
    return atomic_write_bytes(path, model_to_bytes(model))


def load_model(path: str | Path) -> Model:
    return model_from_bytes(read_bytes(path))
