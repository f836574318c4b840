"""Geometry of the probability simplex.

Euclidean projection onto the simplex, projection onto the tangent cone at a
simplex point, and validation of simplex points.
"""
from __future__ import annotations

import numpy as np

from .errors import SimplexError

EPS_SIMPLEX = 1e-9
EPS_ACTIVE = 1e-9

# inputs this close to feasible are returned unchanged (makes projection idempotent)
_FEASIBLE_TOL = 1e-12


def as_simplex_point(weights, eps: float = EPS_SIMPLEX) -> np.ndarray:
    """Validate ``weights`` as a simplex point and return a clamped, read-only copy."""
    w = np.array(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise SimplexError(f"expected a non-empty 1-d vector, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise SimplexError("simplex point has non-finite components")
    low = int(np.argmin(w))
    if w[low] < -eps:
        raise SimplexError(f"component {low} = {w[low]!r} is negative")
    total = w.sum()
    if abs(total - 1.0) > eps:
        raise SimplexError(f"components sum to {total!r}, not 1")
    w = np.maximum(w, 0.0)
    w.setflags(write=False)
    return w


def is_simplex_point(w, eps: float = EPS_SIMPLEX) -> bool:
    w = np.asarray(w, dtype=float)
    return bool(np.all(np.isfinite(w)) and w.min() >= -eps and abs(w.sum() - 1.0) <= eps)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection of ``v`` onto the probability simplex.

    Sort-and-threshold: find the largest k with u_k > (sum_{j<=k} u_j - 1)/k on the
    sorted vector u and shift everything down by that threshold.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"expected a non-empty 1-d vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project a non-finite vector")
    if v.min() >= 0.0 and abs(v.sum() - 1.0) <= _FEASIBLE_TOL:
        return v.copy()
    # the projection commutes with adding a constant; after shifting the threshold lies in [-1, 0),
    # so entries below -1 end at zero and can be clamped, which keeps the sums finite
    with np.errstate(over="ignore"):
        w = np.maximum(v - v.max(), -2.0)
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, w.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(w - theta, 0.0)


def project_tangent_cone(x, v, eps_active: float = EPS_ACTIVE) -> np.ndarray:
    """Project ``v`` onto the tangent cone of the simplex at ``x``.

    The cone is {z : sum z = 0, z_p >= 0 where x_p <= eps_active}. The KKT
    solution is z_p = v_p - mu on inactive coordinates and max(v_p - mu, 0) on
    active ones; mu is found by bisection on the (strictly decreasing) sum and
    then recomputed exactly on the resulting support.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if x.shape != v.shape or x.ndim != 1:
        raise ValueError(f"shape mismatch: x {x.shape}, v {v.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
        raise ValueError("non-finite input")
    active = x <= eps_active
    if not active.any():
        return v - v.mean()
    if active.all():
        raise SimplexError("every coordinate is active; x is not a simplex point")

    def total(mu):
        return (v[~active] - mu).sum() + np.maximum(v[active] - mu, 0.0).sum()

    lo, hi = v.min(), v.max()
    scale = max(1.0, np.abs(v).max())
    for _ in range(200):
        if hi - lo <= 1e-12 * scale:
            break
        mid = 0.5 * (lo + hi)
        if total(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    mu = 0.5 * (lo + hi)
    support = ~active | (v > mu)
    mu = v[support].mean()
    z = v - mu
    z[active] = np.maximum(z[active], 0.0)
    return z


def tangent_basis(size: int) -> np.ndarray:
    """Orthonormal basis (columns) of {z in R^size : sum z = 0}."""
    if size == 1:
        return np.zeros((1, 0))
    centered = np.eye(size) - 1.0 / size
    q, _ = np.linalg.qr(centered[:, : size - 1])
    return q
