"""Constraint sets used by the solver: sparse vectors and the gain set ``G_rho``.

``G_rho = 1 + (rho * l_inf ball  intersect  zero-mean hyperplane)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GainFeasibleSet",
    "hard_threshold",
    "project_zero_mean",
    "project_gain_box",
    "normalize_gains",
]

BOX_TOL = 1e-12
SUM_TOL = 1e-9


@dataclass(frozen=True)
class GainFeasibleSet:
    m: int
    rho: float

    def __post_init__(self):
        if not (0.0 <= self.rho < 1.0):
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")

    def contains(self, v) -> bool:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.m,):
            return False
        off = v - 1.0
        return bool(np.all(np.abs(off) <= self.rho + BOX_TOL)
                    and abs(off.sum()) <= SUM_TOL * self.m)

    def project(self, v) -> np.ndarray:
        return project_gain_box(v, self.rho)


def hard_threshold(u, k: int) -> np.ndarray:
    """Keep the ``k`` largest-magnitude entries of ``u`` and zero the rest.

    Ties at the cut are broken toward the lower index.
    """
    u = np.asarray(u, dtype=np.float64)
    n = u.shape[0]
    if k < 0 or k > n:
        raise ValueError(f"k must lie in [0, {n}], got {k}")
    out = np.zeros_like(u)
    if k == 0:
        return out
    if k == n:
        return u.copy()
    keep = np.argsort(-np.abs(u), kind="stable")[:k]
    out[keep] = u[keep]
    return out


def project_zero_mean(v) -> np.ndarray:
    """Orthogonal projection onto zero-mean vectors, ``(I - 11^T/m) v``."""
    v = np.asarray(v, dtype=np.float64)
    return v - v.mean()


def _clipped_offset(e, lam, rho):
    return np.clip(e - lam, -rho, rho)


def project_gain_box(v, rho: float, tol: float = 1e-12, max_iter: int = 200) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``G_rho``.

    The projection is ``1 + clip(v - 1 - lam, -rho, rho)`` where the scalar shift
    ``lam`` zeroes the sum of clipped offsets. That sum is non-increasing in
    ``lam``, so ``lam`` is bracketed and bisected, then refined exactly on the
    final active set.
    """
    if not (0.0 <= rho < 1.0):
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    v = np.asarray(v, dtype=np.float64)
    m = v.shape[0]
    if rho == 0.0:
        return np.ones(m)
    e = v - 1.0
    if np.all(np.abs(e) <= rho) and abs(e.sum()) <= tol * m:
        return v.copy()

    # at lo every offset clips to +rho, at hi every offset clips to -rho
    lo, hi = e.min() - rho, e.max() + rho
    lam = 0.5 * (lo + hi)
    for _ in range(max_iter):
        lam = 0.5 * (lo + hi)
        s = _clipped_offset(e, lam, rho).sum()
        if abs(s) <= tol * m or hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(lam)):
            break
        if s > 0:
            lo = lam
        else:
            hi = lam
    else:
        raise RuntimeError("bisection for the gain projection did not converge")

    # exact shift on the active set identified by bisection
    shifted = e - lam
    free = np.abs(shifted) < rho
    if free.any():
        upper = shifted >= rho
        lower = shifted <= -rho
        lam_exact = (e[free].sum() + rho * (upper.sum() - lower.sum())) / free.sum()
        w = _clipped_offset(e, lam_exact, rho)
        if abs(w.sum()) <= abs(_clipped_offset(e, lam, rho).sum()):
            lam = lam_exact
    w = _clipped_offset(e, lam, rho)
    if abs(w.sum()) > max(tol, 1e-10) * m:
        raise RuntimeError("gain projection violates the mean constraint")
    return 1.0 + w


def normalize_gains(x, g) -> tuple[np.ndarray, np.ndarray]:
    """Rescale ``(x, g)`` to ``(alpha x, g / alpha)`` with ``alpha = sum(g) / m``."""
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if np.any(g <= 0):
        raise ValueError("gains must be strictly positive")
    alpha = g.sum() / g.shape[0]
    if alpha == 1.0:
        return x.copy(), g.copy()
    return alpha * x, g / alpha
