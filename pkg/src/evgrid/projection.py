"""Euclidean projection onto the aggregate flexibility polytope.

The feasible set of an aggregate profile is the intersection of a power box
``lo <= P <= hi`` and a cumulative-energy band ``E_lo <= cumsum(P)*dt <= E_hi``.
Each piece has a cheap exact projection; Dykstra's alternating scheme
combines them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded


def project_band(y: np.ndarray, e_lo: np.ndarray, e_hi: np.ndarray, dt: float,
                 max_iter: int = 500) -> np.ndarray:
    """Project ``y`` onto ``{P : e_lo <= cumsum(P)*dt <= e_hi}``.

    In terms of ``Z = cumsum(P)*dt - cumsum(y)*dt`` the problem becomes
    ``min sum_t (Z_t - Z_{t-1})^2`` with ``Z_{-1} = 0`` over a box, a
    tridiagonal M-matrix QP. A primal-dual active-set iteration solves it
    exactly in a handful of banded solves.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    Y = np.cumsum(y) * dt
    a = np.asarray(e_lo, dtype=float) - Y
    b = np.asarray(e_hi, dtype=float) - Y
    if np.all(a <= 0) and np.all(b >= 0):
        return y.copy()

    diag = np.full(n, 2.0)
    diag[-1] = 1.0
    # switching tolerance: without it, weakly active points (zero multiplier,
    # Z on the bound up to roundoff) can flip forever
    tol = 1e-12 * (1.0 + max(np.max(np.abs(a)), np.max(np.abs(b))))
    pinned = b - a <= tol
    upper = (b <= 0) | pinned
    lower = (a >= 0) & ~upper
    for _ in range(max_iter):
        act = upper | lower
        ab = np.zeros((3, n))
        ab[1] = np.where(act, 1.0, diag)
        ab[0, 1:] = np.where(act[:-1], 0.0, -1.0)
        ab[2, :-1] = np.where(act[1:], 0.0, -1.0)
        rhs = np.where(upper, b, np.where(lower, a, 0.0))
        Z = solve_banded((1, 1), ab, rhs)
        KZ = diag * Z
        KZ[:-1] -= Z[1:]
        KZ[1:] -= Z[:-1]
        mult = np.where(act, -KZ, 0.0)
        primal_ok = np.all(Z <= b + tol) and np.all(Z >= a - tol)
        dual_ok = np.all(mult[upper & ~pinned] >= -tol) and np.all(mult[lower] <= tol)
        if primal_ok and dual_ok:
            break
        new_upper = (mult + (Z - b) > tol) | pinned
        new_lower = (mult + (Z - a) < -tol) & ~new_upper
        if np.array_equal(new_upper, upper) and np.array_equal(new_lower, lower):
            break
        upper, lower = new_upper, new_lower
    X = np.clip(Z, a, b) + Y
    return np.diff(X, prepend=0.0) / dt


@dataclass
class ProjectionResult:
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool
    # Dykstra increments for the box and the band; reusable as a warm start
    increments: tuple[np.ndarray, np.ndarray] | None = None


def project_polytope(y, p_lo, p_hi, e_lo, e_hi, dt: float, tol: float = 1e-9,
                     max_iter: int = 20000, warm: tuple[np.ndarray, np.ndarray] | None = None) -> ProjectionResult:
    """Dykstra's algorithm for the box/band intersection.

    Stops once successive iterates and the two partial projections agree
    to ``tol`` (max-norm, kW). Dykstra is block-coordinate ascent on the
    dual, so it converges from any starting increments; passing the
    increments of a projection of a nearby point (``warm``) usually saves
    most of the sweeps.
    """
    y = np.asarray(y, dtype=float)
    if warm is None:
        p, q = np.zeros_like(y), np.zeros_like(y)
    else:
        p, q = warm[0].copy(), warm[1].copy()
    x = y - p - q
    residual = np.inf
    for k in range(1, max_iter + 1):
        box = np.clip(x + p, p_lo, p_hi)
        p = x + p - box
        band = project_band(box + q, e_lo, e_hi, dt)
        q = box + q - band
        residual = max(np.max(np.abs(band - x)), np.max(np.abs(band - box)))
        x = band
        if residual <= tol:
            return ProjectionResult(x, k, residual, True, (p, q))
    return ProjectionResult(x, max_iter, residual, False, (p, q))
