"""Polyhedral ordering cones ``C_A = {y : A y >= 0}`` and preference-constraint builders."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import nnls

from .problem import DimensionError

MEMBERSHIP_SLACK = 1e-12
FACET_SLACK = 1e-10


class ConeError(ValueError):
    """The requested cone is rank deficient, not pointed or otherwise invalid."""


@dataclass(frozen=True)
class Cone:
    """Half-space matrix ``A`` and, when known, the unit extreme rays ``Y`` (columns)."""

    A: np.ndarray
    Y: Optional[np.ndarray] = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        M = A.shape[1]
        if A.shape[0] != M or np.linalg.matrix_rank(A) < M:
            raise ConeError("cone matrix must be square and full rank")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)
        if self.Y is not None:
            Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
            if np.min(A @ Y) < -FACET_SLACK:
                raise ConeError("extreme rays lie outside the half-space description")
            Y.setflags(write=False)
            object.__setattr__(self, "Y", Y)

    @property
    def M(self) -> int:
        return self.A.shape[0]

    def contains(self, y) -> bool:
        return contains(self.A, y)

    def dominates(self, v, w) -> bool:
        return dominates(self.A, v, w)


def _check_pair(A: np.ndarray, v: np.ndarray) -> None:
    if A.ndim != 2 or v.shape != (A.shape[1],):
        raise DimensionError(f"vector of shape {v.shape} incompatible with matrix {A.shape}")


def dominates(A, v, w) -> bool:
    """True iff ``v`` strictly ``C_A``-dominates ``w``, i.e. ``A (v - w) < 0``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    _check_pair(A, v)
    _check_pair(A, w)
    return bool(np.all(A @ (v - w) < 0))


def contains(A, y) -> bool:
    """Membership in ``C_A`` with a small slack for round-off on facets."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    y = np.asarray(y, dtype=float)
    _check_pair(A, y)
    return bool(np.all(A @ y >= -MEMBERSHIP_SLACK))


def _normalize_columns(Y: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(Y, axis=0)
    if np.any(norms == 0):
        raise ConeError("zero ray")
    return Y / norms


def rays_to_halfspaces(Y) -> np.ndarray:
    """Facet normals (unit rows) of the cone generated by the columns of ``Y``.

    Each facet is spanned by ``M - 1`` rays; its normal is oriented towards the
    interior point ``Y @ 1``. For a simplicial cone (``Y`` square) row ``m`` is
    the facet opposite ray ``m``, so ``A @ Y`` is diagonal with positive entries.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    M, K = Y.shape
    if K < M or np.linalg.matrix_rank(Y) < M:
        raise ConeError("ray matrix must have rank M")
    Y = _normalize_columns(Y)
    interior = Y.sum(axis=1)

    rows: list[np.ndarray] = []
    for subset in itertools.combinations(range(K), M - 1):
        S = Y[:, list(subset)]
        if M > 1 and np.linalg.matrix_rank(S) < M - 1:
            continue
        # unit normal of span(S): last left-singular vector
        a = np.linalg.svd(S, full_matrices=True)[0][:, -1] if M > 1 else np.ones(1)
        side = a @ interior
        if abs(side) > FACET_SLACK:
            candidates = [a if side > 0 else -a]
        else:
            candidates = [a, -a]
        for cand in candidates:
            if np.min(Y.T @ cand) >= -FACET_SLACK:
                if not any(np.allclose(cand, r, atol=1e-9) for r in rows):
                    rows.append(cand)

    if len(rows) < M or np.linalg.matrix_rank(np.array(rows)) < M:
        raise ConeError("cone generated by these rays is not pointed")
    A = np.array(rows)
    if K == M:
        # facet m is the one that does not vanish on ray m
        order = np.argmax(np.abs(A @ Y), axis=0)
        A = A[order]
    return A


def extreme_rays(rays) -> np.ndarray:
    """Drop duplicates and rays that are conic combinations of the remaining ones."""
    R = _normalize_columns(np.atleast_2d(np.asarray(rays, dtype=float)))
    kept: list[np.ndarray] = []
    for r in R.T:
        if not any(np.dot(r, k) > 1.0 - 1e-12 for k in kept):
            kept.append(r)
    changed = True
    while changed and len(kept) > 1:
        changed = False
        for i in range(len(kept)):
            others = np.column_stack([k for j, k in enumerate(kept) if j != i])
            _, resid = nnls(others, kept[i])
            if resid <= 1e-10:
                kept.pop(i)
                changed = True
                break
    return np.column_stack(kept)


def controlled_ascent_cone(F0, F_go, base_rays) -> Cone:
    """Widen ``base_rays`` so that moving from ``F0`` to ``F_go`` counts as an improvement.

    The ray ``(F0 - F_go) / |F0 - F_go|`` is added, the extreme rays of the
    conic hull are kept, and the half-space form is computed from them.
    """
    F0 = np.asarray(F0, dtype=float)
    F_go = np.asarray(F_go, dtype=float)
    base = np.atleast_2d(np.asarray(base_rays, dtype=float))
    if F0.shape != F_go.shape or base.shape[0] != F0.size:
        raise DimensionError("F0, F_go and base rays must share the objective dimension")
    diff = F0 - F_go
    norm = np.linalg.norm(diff)
    if norm == 0:
        raise ValueError("F0 and F_go must differ")
    Y = extreme_rays(np.column_stack([base, diff / norm]))
    if Y.shape[1] != F0.size:
        raise ConeError(
            f"widened cone has {Y.shape[1]} extreme rays; a pointed simplicial cone "
            f"in R^{F0.size} is required")
    A = rays_to_halfspaces(Y)
    return Cone(A=A, Y=Y)


def _orthonormal_complement(v: np.ndarray) -> np.ndarray:
    # Gram-Schmidt over the coordinate axes keeps the basis canonical (e.g. e_2, e_3 for v = e_1)
    M = v.size
    basis = [v / np.linalg.norm(v)]
    rows = []
    for i in range(M):
        x = np.zeros(M)
        x[i] = 1.0
        for _ in range(2):
            for b in basis:
                x = x - (b @ x) * b
        n = np.linalg.norm(x)
        if n > 1e-8:
            x = x / n
            basis.append(x)
            rows.append(x)
        if len(rows) == M - 1:
            break
    return np.array(rows).reshape(M - 1, M)


def ray_to_equality(v) -> tuple[np.ndarray, np.ndarray]:
    """Equality constraint ``B_h F = 0`` that holds exactly on the line spanned by ``v``."""
    v = np.asarray(v, dtype=float).reshape(-1)
    if not np.any(v):
        raise ValueError("preference ray must be non-zero")
    return _orthonormal_complement(v), np.zeros(v.size - 1)


def two_points_to_equality(F1, F2) -> tuple[np.ndarray, np.ndarray]:
    """Equality constraint whose solution set is the line through ``F1`` and ``F2``."""
    F1 = np.asarray(F1, dtype=float).reshape(-1)
    F2 = np.asarray(F2, dtype=float).reshape(-1)
    if F1.shape != F2.shape:
        raise DimensionError("reference points differ in length")
    if np.array_equal(F1, F2):
        raise ValueError("reference points must differ")
    B_h = _orthonormal_complement(F1 - F2)
    return B_h, -B_h @ F1


# rays (2,-1) and (-1,2): trading one unit of f_2 for two units of f_1 still counts as progress
TRADE_OFF_RAYS = np.array([[2.0, -1.0], [-1.0, 2.0]]).T / np.sqrt(5.0)
