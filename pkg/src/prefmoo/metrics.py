"""Quality indicators for sets of objective vectors."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .problem import DimensionError

MAX_HV_DIM = 4
# odd count so that s = 0 (the symmetric front point) lies on the grid
_PF_GRID = np.linspace(-1.0, 1.0, 10_001)


def _points(points, M=None) -> np.ndarray:
    P = np.asarray(points, dtype=float)
    if P.size == 0:
        return np.zeros((0, M or 0))
    return np.atleast_2d(P)


def _hv2d(P: np.ndarray, ref: np.ndarray) -> float:
    # sweep along f_1; keep the running minimum of f_2
    P = P[np.lexsort((P[:, 1], P[:, 0]))]
    volume = 0.0
    best = ref[1]
    for x, y in P:
        if y < best:
            volume += (ref[0] - x) * (best - y)
            best = y
    return volume


def _hv(P: np.ndarray, ref: np.ndarray) -> float:
    if len(P) == 0:
        return 0.0
    if P.shape[1] == 2:
        return _hv2d(P, ref)
    # slice along the last coordinate
    P = P[np.argsort(P[:, -1], kind="stable")]
    volume = 0.0
    for i in range(len(P)):
        upper = P[i + 1, -1] if i + 1 < len(P) else ref[-1]
        depth = upper - P[i, -1]
        if depth > 0:
            volume += depth * _hv(P[:i + 1, :-1], ref[:-1])
    return volume


def hypervolume(points, ref) -> float:
    """Lebesgue measure of the region dominated by ``points`` and bounded by ``ref``.

    Exact for 2 to 4 objectives. Points that do not strictly dominate ``ref``
    contribute nothing.
    """
    ref = np.asarray(ref, dtype=float)
    M = ref.size
    if M < 2:
        raise DimensionError("hypervolume needs at least two objectives")
    if M > MAX_HV_DIM:
        raise NotImplementedError(f"exact hypervolume is implemented for M <= {MAX_HV_DIM}")
    if not np.all(np.isfinite(ref)):
        raise ValueError("reference point must be finite")
    P = _points(points, M)
    if P.shape[1] != M:
        raise DimensionError(f"points have {P.shape[1]} objectives, reference has {M}")
    P = P[np.all(P < ref, axis=1)]
    return float(_hv(P, ref))


def relative_loss_profile(r, f) -> np.ndarray:
    """Elementwise ``r * f``; constant exactly when ``f`` is aligned with ``1 / r``."""
    r = np.asarray(r, dtype=float)
    f = np.asarray(f, dtype=float)
    if r.shape != f.shape:
        raise DimensionError(f"preference {r.shape} and objective {f.shape} differ")
    return r * f


def _pareto_dominates(A, v, w) -> bool:
    z = np.asarray(A) @ (np.asarray(v, dtype=float) - np.asarray(w, dtype=float))
    return bool(np.all(z <= 0.0) and np.any(z < 0.0))


def nondominated_filter(points, A=None) -> list:
    """Points not ``C_A``-dominated by any other point, in input order.

    ``v`` dominates ``w`` when ``A v <= A w`` with at least one strict
    inequality, so ``(1, 1)`` is removed by ``(0, 1)`` under the orthant.
    Exact duplicates do not remove each other.
    """
    P = _points(points)
    if len(P) == 0:
        return []
    A = np.eye(P.shape[1]) if A is None else np.asarray(A, dtype=float)
    Z = P @ A.T
    keep = []
    for i in range(len(P)):
        dominated = np.any(np.all(Z <= Z[i], axis=1) & np.any(Z < Z[i], axis=1))
        if not dominated:
            keep.append(P[i])
    return keep


def nondominated_filter_bruteforce(points, A=None) -> list:
    """Pairwise O(n^2) reference implementation of :func:`nondominated_filter`."""
    P = _points(points)
    if len(P) == 0:
        return []
    A = np.eye(P.shape[1]) if A is None else np.asarray(A, dtype=float)
    return [p for i, p in enumerate(P)
            if not any(_pareto_dominates(A, P[j], p) for j in range(len(P)) if j != i)]


def synthetic_front(s) -> np.ndarray:
    """Points of the analytic Pareto front of ``synthetic_concave`` for ``s`` in ``[-1, 1]``."""
    s = np.asarray(s, dtype=float)
    return np.stack([1.0 - np.exp(-(s - 1.0) ** 2), 1.0 - np.exp(-(s + 1.0) ** 2)], axis=-1)


def pf_distance_synthetic(f, grid: Sequence[float] = _PF_GRID) -> float:
    """Euclidean distance from ``f`` to the analytic front, on a grid of about 10^4 points."""
    f = np.asarray(f, dtype=float)
    if f.shape != (2,):
        raise DimensionError("the synthetic front is two-dimensional")
    front = synthetic_front(grid)
    return float(np.min(np.linalg.norm(front - f, axis=1)))
