"""Sinkhorn sweep kernels: compiled extension if built, NumPy otherwise.

The selected backend is importable as ``log_sinkhorn`` / ``plain_sinkhorn``;
``BACKEND`` names it. ``available_backends()`` exposes every importable
backend module so tests and the benchmark can compare them directly.
"""

from . import _sinkhorn_np

try:
    from . import _sinkhorn_cy as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _sinkhorn_np
    BACKEND = "numpy"

log_sinkhorn = _impl.log_sinkhorn
plain_sinkhorn = _impl.plain_sinkhorn


def available_backends() -> dict:
    """Map backend name -> module for every backend that imports here."""
    out = {"numpy": _sinkhorn_np}
    if BACKEND == "cython":
        out["cython"] = _impl
    return out
