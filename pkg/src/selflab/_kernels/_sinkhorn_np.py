"""NumPy implementation of the Sinkhorn sweep loops.

Fallback backend, used when the compiled extension is unavailable. Both
backends run the identical iteration: one sweep rescales rows to the target
row marginal, then columns to the target column marginal; convergence is
measured after the full sweep as the largest absolute row-sum deviation
(column sums are exact by construction after the column step).
"""

from __future__ import annotations

import numpy as np


def _lse(x: np.ndarray, axis: int) -> np.ndarray:
    """Log-sum-exp that maps all -inf slices to -inf instead of NaN."""
    m = np.max(x, axis=axis)
    finite = np.isfinite(m)
    shifted = np.exp(x - np.expand_dims(np.where(finite, m, 0.0), axis))
    out = np.log(np.sum(shifted, axis=axis))
    return np.where(finite, m + out, -np.inf)


def log_sinkhorn(logk, log_r, log_h, r, tol, max_iters):
    """Log-domain sweeps: returns (f, g, iterations, row_error, converged).

    The implied plan is exp(logk + f[:, None] + g[None, :]). Entries of
    ``log_r`` may be -inf (zero row marginal), which pins f to -inf and the
    whole row of the plan to exactly zero.
    """
    c, n = logk.shape
    f = np.zeros(c)
    g = np.zeros(n)
    row_lse = _lse(logk, axis=1)
    iters = 0
    err = np.inf
    converged = False
    with np.errstate(invalid="ignore"):
        for sweep in range(1, max_iters + 1):
            f = log_r - row_lse
            g = log_h - _lse(logk + f[:, None], axis=0)
            row_lse = _lse(logk + g[None, :], axis=1)
            rowsum = np.exp(f + row_lse)
            err = float(np.max(np.abs(np.where(np.isnan(rowsum), 0.0, rowsum) - r)))
            iters = sweep
            if err <= tol:
                converged = True
                break
    return f, g, iters, err, converged


def plain_sinkhorn(k, r, h, tol, max_iters):
    """Multiplicative sweeps on K=exp(scores/eps): (u, v, iterations, row_error, converged).

    The implied plan is diag(u) K diag(v). Overflow/underflow is not guarded
    beyond zero-marginal handling; the log-domain path is the robust default.
    """
    c, n = k.shape
    u = np.ones(c)
    v = np.ones(n)
    kv = k @ v
    iters = 0
    err = np.inf
    converged = False
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for sweep in range(1, max_iters + 1):
            u = np.where(r > 0.0, r / kv, 0.0)
            ktu = k.T @ u
            v = np.where(h > 0.0, h / ktu, 0.0)
            kv = k @ v
            rowsum = u * kv
            iters = sweep
            if not np.isfinite(rowsum).all():
                err = np.inf
                break
            err = float(np.max(np.abs(rowsum - r)))
            if err <= tol:
                converged = True
                break
    return u, v, iters, err, converged
