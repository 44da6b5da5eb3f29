"""Entropic optimal-transport assignment via Sinkhorn-Knopp scaling.

Solves for the C x N plan Q = diag(a) exp(scores/epsilon) diag(b) whose row
sums match a class marginal r and whose column sums match a sample marginal
h. Two methods sit behind one interface: a plain multiplicative scaler and a
log-domain scaler. The log-domain path is the default; with epsilon around
0.05, exp(score/epsilon) overflows float64 once |score| passes ~35, which
cosine-scale head outputs do not hit but stress inputs can.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITERS = 1000
_SUM_TOL = 1e-9


@dataclass
class Marginals:
    """Prescribed row marginal r (length C) and column marginal h (length N)."""

    r: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=np.float64)
        self.h = np.asarray(self.h, dtype=np.float64)
        for name, v in (("r", self.r), ("h", self.h)):
            if v.ndim != 1:
                raise ValueError(f"marginal {name} must be a vector")
            if (v < 0.0).any():
                raise ValueError(f"marginal {name} has negative entries")
            if abs(float(v.sum()) - 1.0) > _SUM_TOL:
                raise ValueError(f"marginal {name} sums to {float(v.sum())}, not 1")

    @classmethod
    def uniform(cls, num_classes: int, num_samples: int) -> "Marginals":
        return cls(
            np.full(num_classes, 1.0 / num_classes),
            np.full(num_samples, 1.0 / num_samples),
        )


@dataclass
class TransportPlan:
    """Solver output: nonnegative plan with convergence diagnostics."""

    matrix: np.ndarray
    converged: bool
    iterations_used: int
    marginal_error: float


def sinkhorn(
    scores: np.ndarray,
    m: Marginals,
    epsilon: float,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
    method: str = "log",
) -> TransportPlan:
    """Scale exp(scores/epsilon) to the prescribed marginals.

    Parameters
    ----------
    scores : (C, N) array of raw per-class head outputs, finite.
    m : marginals; rows of the plan sum to m.r, columns to m.h.
    epsilon : positive assignment temperature.
    max_iters : sweep budget; one sweep is a row update plus a column update.
    tol : largest tolerated absolute marginal deviation.
    method : "log" (default, overflow-safe) or "plain" (multiplicative).

    Rows whose marginal entry is exactly zero receive exactly zero mass.
    Returns the best iterate with converged=False if the budget runs out.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise ValueError("scores must be a C x N matrix")
    if not np.isfinite(scores).all():
        raise ValueError("scores must be finite")
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    c, n = scores.shape
    if m.r.shape[0] != c or m.h.shape[0] != n:
        raise ValueError(
            f"marginal lengths ({m.r.shape[0]}, {m.h.shape[0]}) do not match scores {scores.shape}"
        )
    if (m.r > 1.0 + _SUM_TOL).any():
        raise ValueError("row marginal entries must not exceed 1")

    logk = np.ascontiguousarray(scores / epsilon)
    r = np.ascontiguousarray(m.r)
    h = np.ascontiguousarray(m.h)

    if method == "log":
        with np.errstate(divide="ignore"):
            log_r = np.log(r)
            log_h = np.log(h)
        f, g, iters, _, converged = _kernels.log_sinkhorn(
            logk, log_r, log_h, r, float(tol), int(max_iters)
        )
        with np.errstate(invalid="ignore"):
            q = np.exp(logk + np.asarray(f)[:, None] + np.asarray(g)[None, :])
        q = np.nan_to_num(q, nan=0.0, posinf=0.0)
    elif method == "plain":
        # a global shift leaves the plan unchanged (absorbed by the scalings)
        # and keeps exp() in range for moderate scores
        k = np.ascontiguousarray(np.exp(logk - logk.max()))
        u, v, iters, err, converged = _kernels.plain_sinkhorn(
            k, r, h, float(tol), int(max_iters)
        )
        if not np.isfinite(err):
            q = np.zeros_like(k)
        else:
            q = np.asarray(u)[:, None] * k * np.asarray(v)[None, :]
    else:
        raise ValueError(f"unknown method {method!r}")

    q[r == 0.0, :] = 0.0
    row_err = float(np.max(np.abs(q.sum(axis=1) - r)))
    col_err = float(np.max(np.abs(q.sum(axis=0) - h)))
    return TransportPlan(
        matrix=q,
        converged=bool(converged),
        iterations_used=int(iters),
        marginal_error=max(row_err, col_err),
    )


def soft_assignment_from_plan(q: TransportPlan) -> tuple[np.ndarray, int]:
    """Rescale each plan column to the class simplex.

    Zero columns (no mass reached the sample) become uniform and are counted.
    Returns (C x N column-stochastic matrix, zero-column count).
    """
    mat = np.asarray(q.matrix, dtype=np.float64)
    col_sums = mat.sum(axis=0)
    zero = col_sums == 0.0
    n_zero = int(zero.sum())
    safe = np.where(zero, 1.0, col_sums)
    probs = mat / safe[None, :]
    if n_zero:
        probs[:, zero] = 1.0 / mat.shape[0]
    return probs, n_zero
