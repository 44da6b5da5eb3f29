"""Dense tensor containers and the SLT1/SLL1 binary file formats.

SLT1 carries float32 tensors (features, probability maps), SLL1 carries
uint16 label maps. Both use the same 8-byte header followed by little-endian
extents and a row-major payload:

    bytes 0-3   magic, b"SLT1" or b"SLL1"
    byte  4     rank, 1..4
    bytes 5-7   reserved, must be zero
    next        rank x uint32 little-endian extents
    payload     float32 (SLT1) or uint16 (SLL1), little-endian, row-major

Tensors are stored in single precision; computation elsewhere in the package
accumulates in double precision.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC_TENSOR = b"SLT1"
MAGIC_LABELS = b"SLL1"
MAX_RANK = 4


class TensorIOError(Exception):
    """Base class for tensor file format errors."""


class BadMagicError(TensorIOError):
    """File does not start with the expected magic bytes."""


class BadHeaderError(TensorIOError):
    """Header is truncated, has an invalid rank, or nonzero reserved bytes."""


class PayloadSizeError(TensorIOError):
    """Payload length disagrees with the declared shape."""


class NonFiniteValueError(TensorIOError):
    """Tensor payload contains NaN or Inf."""


def _read_header(raw: bytes, magic: bytes, path) -> tuple[tuple[int, ...], int]:
    if len(raw) < 8:
        raise BadHeaderError(f"{path}: truncated header ({len(raw)} bytes)")
    if raw[:4] != magic:
        raise BadMagicError(f"{path}: bad magic {raw[:4]!r}, expected {magic!r}")
    rank = raw[4]
    if not 1 <= rank <= MAX_RANK:
        raise BadHeaderError(f"{path}: rank {rank} outside 1..{MAX_RANK}")
    if raw[5:8] != b"\x00\x00\x00":
        raise BadHeaderError(f"{path}: reserved header bytes are nonzero")
    if len(raw) < 8 + 4 * rank:
        raise BadHeaderError(f"{path}: truncated extent list")
    shape = struct.unpack_from(f"<{rank}I", raw, 8)
    return shape, 8 + 4 * rank


def _check_payload(raw: bytes, offset: int, shape, itemsize: int, path) -> int:
    n = 1
    for extent in shape:
        n *= extent
    expected = n * itemsize
    actual = len(raw) - offset
    if actual != expected:
        raise PayloadSizeError(
            f"{path}: payload is {actual} bytes, shape {tuple(shape)} needs {expected}"
        )
    return n


def load_tensor(path) -> np.ndarray:
    """Load an SLT1 file as a float32 array.

    Raises BadMagicError / BadHeaderError / PayloadSizeError /
    NonFiniteValueError on malformed input.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    shape, offset = _read_header(raw, MAGIC_TENSOR, path)
    n = _check_payload(raw, offset, shape, 4, path)
    data = np.frombuffer(raw, dtype="<f4", count=n, offset=offset)
    if not np.isfinite(data).all():
        raise NonFiniteValueError(f"{path}: payload contains non-finite values")
    return data.reshape(shape).astype(np.float32, copy=True)


def save_tensor(path, t: np.ndarray) -> None:
    """Write a float array as an SLT1 file (float32, little-endian)."""
    arr = np.ascontiguousarray(t, dtype="<f4")
    if not 1 <= arr.ndim <= MAX_RANK:
        raise ValueError(f"tensor rank {arr.ndim} outside 1..{MAX_RANK}")
    if not np.isfinite(arr).all():
        raise NonFiniteValueError(f"{path}: refusing to write non-finite values")
    with open(path, "wb") as fh:
        fh.write(MAGIC_TENSOR)
        fh.write(struct.pack("<B3x", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def load_labels(path, num_classes: int | None = None) -> np.ndarray:
    """Load an SLL1 file as a uint16 label array.

    Entries must be class indices below ``num_classes`` or the ignore
    sentinel ``num_classes`` itself; validated when ``num_classes`` is given.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    shape, offset = _read_header(raw, MAGIC_LABELS, path)
    n = _check_payload(raw, offset, shape, 2, path)
    data = np.frombuffer(raw, dtype="<u2", count=n, offset=offset)
    labels = data.reshape(shape).astype(np.uint16, copy=True)
    if num_classes is not None:
        check_labels(labels, num_classes)
    return labels


def save_labels(path, labels: np.ndarray) -> None:
    """Write an integer label array as an SLL1 file (uint16, little-endian)."""
    arr = np.ascontiguousarray(labels, dtype="<u2")
    if not 1 <= arr.ndim <= MAX_RANK:
        raise ValueError(f"label rank {arr.ndim} outside 1..{MAX_RANK}")
    with open(path, "wb") as fh:
        fh.write(MAGIC_LABELS)
        fh.write(struct.pack("<B3x", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def check_labels(labels: np.ndarray, num_classes: int) -> None:
    """Validate that every entry is a class index or the ignore sentinel."""
    if labels.size and int(labels.max()) > num_classes:
        raise ValueError(
            f"label {int(labels.max())} exceeds ignore sentinel {num_classes}"
        )


def normalize_rows(t: np.ndarray) -> tuple[np.ndarray, int]:
    """L2-normalize along the last axis, in double precision.

    All-zero rows are left as zeros; the count of such rows is returned so
    downstream sampling can skip them.
    """
    arr = np.asarray(t, dtype=np.float64)
    norms = np.linalg.norm(arr, axis=-1, keepdims=True)
    zero = norms == 0.0
    safe = np.where(zero, 1.0, norms)
    return arr / safe, int(zero.sum())
