"""Vector-valued objectives, linear preference constraints and benchmark problems."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

ObjectiveFn = Callable[[np.ndarray], np.ndarray]
JacobianFn = Callable[[np.ndarray], np.ndarray]
# (theta, rng) -> (F_xi(theta), grad F_xi(theta))
SamplerFn = Callable[[np.ndarray, np.random.Generator], "tuple[np.ndarray, np.ndarray]"]


class DimensionError(ValueError):
    """Raised when array shapes disagree with the declared problem sizes."""


@dataclass(frozen=True)
class Problem:
    """A smooth map ``F: R^q -> R^M`` with its exact Jacobian.

    The Jacobian has shape ``(q, M)``; column ``m`` is the gradient of ``f_m``.
    ``sampler`` is optional and, when present, must return unbiased
    stochastic estimates of ``(F, jacobian)`` drawn from the supplied generator.
    """

    q: int
    M: int
    objective: ObjectiveFn
    jacobian: JacobianFn
    sampler: Optional[SamplerFn] = None
    name: str = "custom"
    samples: tuple = ()

    def __call__(self, theta: np.ndarray) -> np.ndarray:
        return self.objective(theta)

    def value_and_jacobian(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.objective(theta), self.jacobian(theta)

    def sample(self, theta: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        if self.sampler is None:
            raise ValueError(f"problem {self.name!r} has no stochastic sampler")
        return self.sampler(theta, rng)


def _as_matrix(x, rows: int, cols: int, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.size == 0:
        return np.zeros((rows, cols))
    a = np.atleast_2d(a)
    if a.shape != (rows, cols):
        raise DimensionError(f"{name} has shape {a.shape}, expected {(rows, cols)}")
    return a


@dataclass(frozen=True)
class Preference:
    """Relative preference (cone matrix ``A``) plus linear constraints on ``F``.

    ``G = B_g F + b_g <= 0`` and ``H = B_h F + b_h = 0``. ``c_g`` and ``c_h``
    set how aggressively violations are corrected.
    """

    A: np.ndarray
    B_g: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    b_g: np.ndarray = field(default_factory=lambda: np.zeros(0))
    B_h: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    b_h: np.ndarray = field(default_factory=lambda: np.zeros(0))
    c_g: float = 1.0
    c_h: float = 1.0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        M = A.shape[0]
        if A.shape != (M, M):
            raise DimensionError(f"A must be square, got shape {A.shape}")
        if np.linalg.matrix_rank(A) < M:
            raise ValueError("cone matrix A must have full rank")

        B_g = np.asarray(self.B_g, dtype=float)
        M_g = 0 if B_g.size == 0 else np.atleast_2d(B_g).shape[0]
        B_g = _as_matrix(B_g, M_g, M, "B_g")
        b_g = np.asarray(self.b_g, dtype=float).reshape(-1)
        if b_g.size == 0:
            b_g = np.zeros(M_g)
        if b_g.shape != (M_g,):
            raise DimensionError(f"b_g has length {b_g.size}, expected {M_g}")

        B_h = np.asarray(self.B_h, dtype=float)
        M_h = 0 if B_h.size == 0 else np.atleast_2d(B_h).shape[0]
        B_h = _as_matrix(B_h, M_h, M, "B_h")
        b_h = np.asarray(self.b_h, dtype=float).reshape(-1)
        if b_h.size == 0:
            b_h = np.zeros(M_h)
        if b_h.shape != (M_h,):
            raise DimensionError(f"b_h has length {b_h.size}, expected {M_h}")
        if M_h > 0 and np.linalg.matrix_rank(B_h) < M_h:
            raise ValueError("B_h must have full row rank")

        if not (self.c_g > 0 and self.c_h > 0):
            raise ValueError("c_g and c_h must be strictly positive")

        for name, value in (("A", A), ("B_g", B_g), ("b_g", b_g), ("B_h", B_h), ("b_h", b_h)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "c_g", float(self.c_g))
        object.__setattr__(self, "c_h", float(self.c_h))

    @property
    def M(self) -> int:
        return self.A.shape[0]

    @property
    def M_g(self) -> int:
        return self.B_g.shape[0]

    @property
    def M_h(self) -> int:
        return self.B_h.shape[0]

    @property
    def A_ag(self) -> np.ndarray:
        """Stacked ``[A; B_g; B_h]``."""
        return np.vstack([self.A, self.B_g, self.B_h])

    @classmethod
    def unconstrained(cls, M: int, A=None) -> "Preference":
        return cls(A=np.eye(M) if A is None else A)


def eval_constraints(pref: Preference, f) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(g, h) = (B_g f + b_g, B_h f + b_h)``."""
    f = np.asarray(f, dtype=float)
    if f.shape != (pref.M,):
        raise DimensionError(f"objective point has shape {f.shape}, expected ({pref.M},)")
    return pref.B_g @ f + pref.b_g, pref.B_h @ f + pref.b_h


def synthetic_concave(q: int) -> Problem:
    """Two shifted Gaussian wells with a concave Pareto front.

    ``f_1 = 1 - exp(-|theta - u|^2)``, ``f_2 = 1 - exp(-|theta + u|^2)`` with
    ``u = 1/sqrt(q) * ones``.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    u = np.full(q, 1.0 / np.sqrt(q))

    def objective(theta):
        theta = np.asarray(theta, dtype=float)
        a = theta - u
        b = theta + u
        return np.array([1.0 - np.exp(-a @ a), 1.0 - np.exp(-b @ b)])

    def jacobian(theta):
        theta = np.asarray(theta, dtype=float)
        a = theta - u
        b = theta + u
        return np.column_stack([2.0 * np.exp(-a @ a) * a, 2.0 * np.exp(-b @ b) * b])

    def sampler(theta, rng):
        return objective(theta), jacobian(theta)

    return Problem(q=q, M=2, objective=objective, jacobian=jacobian, sampler=sampler,
                   name="synthetic_concave")


def quadratic_problem(centers, scales=None) -> Problem:
    """Convex problem ``f_m = s_m |theta - c_m|^2`` (one row of ``centers`` per objective)."""
    C = np.atleast_2d(np.asarray(centers, dtype=float))
    M, q = C.shape
    s = np.ones(M) if scales is None else np.asarray(scales, dtype=float)

    def objective(theta):
        diff = np.asarray(theta, dtype=float)[None, :] - C
        return s * np.einsum("mi,mi->m", diff, diff)

    def jacobian(theta):
        diff = np.asarray(theta, dtype=float)[None, :] - C
        return (2.0 * s[:, None] * diff).T

    def sampler(theta, rng):
        return objective(theta), jacobian(theta)

    return Problem(q=q, M=M, objective=objective, jacobian=jacobian, sampler=sampler,
                   name="quadratic")


def constant_problem(values, q: int) -> Problem:
    """``F`` fixed at ``values`` everywhere; zero Jacobian."""
    v = np.asarray(values, dtype=float)
    M = v.size

    def objective(theta):
        return v.copy()

    def jacobian(theta):
        return np.zeros((q, M))

    def sampler(theta, rng):
        return objective(theta), jacobian(theta)

    return Problem(q=q, M=M, objective=objective, jacobian=jacobian, sampler=sampler,
                   name="constant")


def finite_sum_problem(samples: Sequence[Problem]) -> Problem:
    """Average of per-sample problems; the sampler picks one sample uniformly."""
    samples = list(samples)
    if not samples:
        raise ValueError("finite_sum_problem needs at least one sample")
    q, M = samples[0].q, samples[0].M
    if any(s.q != q or s.M != M for s in samples):
        raise DimensionError("all samples must share q and M")
    n = len(samples)

    def objective(theta):
        return sum(s.objective(theta) for s in samples) / n

    def jacobian(theta):
        return sum(s.jacobian(theta) for s in samples) / n

    def sampler(theta, rng):
        k = int(rng.integers(n))
        return samples[k].value_and_jacobian(theta)

    return Problem(q=q, M=M, objective=objective, jacobian=jacobian, sampler=sampler,
                   name="finite_sum", samples=tuple(samples))


def check_jacobian(problem: Problem, theta, step: Optional[float] = None) -> float:
    """Max relative error between the analytic Jacobian and central differences."""
    theta = np.asarray(theta, dtype=float)
    h = 1e-5 * (1.0 + np.linalg.norm(theta)) if step is None else step
    fd = np.empty((problem.q, problem.M))
    for i in range(problem.q):
        e = np.zeros(problem.q)
        e[i] = h
        fd[i] = (problem.objective(theta + e) - problem.objective(theta - e)) / (2 * h)
    J = problem.jacobian(theta)
    return float(np.max(np.abs(J - fd)) / max(np.max(np.abs(fd)), 1e-12))
