"""Direction-finding subprogram solved in its dual (multiplier) form.

For Jacobian ``J`` (``q x M``), stacked constraint matrix ``A_ag = [A; B_g; B_h]``
and multipliers ``lam = [lam_f; lam_g; lam_h]`` the dual objective is::

    phi(lam) = 1/2 |J A_ag^T lam|^2 - c_g lam_g^T g - c_h lam_h^T h

minimised over ``lam_f`` in a (weighted) simplex, ``lam_g >= 0`` and free
``lam_h``. The update direction is ``d = -J A_ag^T lam``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .problem import DimensionError, Preference, eval_constraints

ADAPTIVE = "adaptive"
SIMPLIFIED = "simplified"
DOMAINS = (ADAPTIVE, SIMPLIFIED)

DOMAIN_TOL = 1e-8

DEFAULT_INNER_STEP = 0.1
DEFAULT_INNER_ITERS = 250
DEFAULT_INNER_TOL = 1e-5


class DomainError(ValueError):
    """Multipliers outside their domain, or an adaptive domain that does not exist."""


class NumericalError(FloatingPointError):
    """NaN or inf appeared in an iterate."""


@dataclass(frozen=True)
class Multipliers:
    f: np.ndarray
    g: np.ndarray
    h: np.ndarray

    def stack(self) -> np.ndarray:
        return np.concatenate([self.f, self.g, self.h])

    @classmethod
    def split(cls, x: np.ndarray, M: int, M_g: int) -> "Multipliers":
        x = np.asarray(x, dtype=float)
        return cls(f=x[:M].copy(), g=x[M:M + M_g].copy(), h=x[M + M_g:].copy())


LambdaLike = Union[Multipliers, np.ndarray]


@dataclass(frozen=True)
class SubproblemContext:
    """Everything the subprogram needs at one iterate ``theta``."""

    J: np.ndarray
    f: np.ndarray
    g: np.ndarray
    h: np.ndarray
    pref: Preference
    domain: str
    A_ag: np.ndarray
    gram: np.ndarray
    linear: np.ndarray
    weights: np.ndarray
    budget: float

    @classmethod
    def build(cls, J, f, pref: Preference, domain: str = ADAPTIVE, g=None, h=None
              ) -> "SubproblemContext":
        J = np.asarray(J, dtype=float)
        f = np.asarray(f, dtype=float)
        if J.ndim != 2 or J.shape[1] != pref.M or f.shape != (pref.M,):
            raise DimensionError(
                f"Jacobian {J.shape} / objective {f.shape} do not match M={pref.M}")
        if domain not in DOMAINS:
            raise ValueError(f"unknown multiplier domain {domain!r}")
        g0, h0 = eval_constraints(pref, f)
        g = g0 if g is None else np.asarray(g, dtype=float)
        h = h0 if h is None else np.asarray(h, dtype=float)
        if domain == ADAPTIVE:
            weights = pref.A @ f
            if not np.all(weights > 0):
                raise DomainError(
                    f"adaptive multiplier domain needs A F(theta) > 0, got {weights}")
            budget = float(weights.sum())
        else:
            weights = np.ones(pref.M)
            budget = 1.0
        A_ag = pref.A_ag
        JA = J @ A_ag.T
        linear = np.concatenate([np.zeros(pref.M), pref.c_g * g, pref.c_h * h])
        return cls(J=J, f=f, g=g, h=h, pref=pref, domain=domain, A_ag=A_ag,
                   gram=JA.T @ JA, linear=linear, weights=weights, budget=budget)

    @property
    def M(self) -> int:
        return self.pref.M

    @property
    def M_g(self) -> int:
        return self.pref.M_g

    @property
    def size(self) -> int:
        return self.A_ag.shape[0]

    def initial_multipliers(self) -> Multipliers:
        """Uniform ``lam_f`` on its simplex, zero constraint multipliers."""
        lam_f = np.full(self.M, self.budget / self.weights.sum())
        return project_multipliers(
            Multipliers(lam_f, np.zeros(self.M_g), np.zeros(self.pref.M_h)), self)

    def direction(self, lam: LambdaLike) -> np.ndarray:
        return -self.J @ (self.A_ag.T @ _flat(lam, self))


@dataclass(frozen=True)
class SubproblemResult:
    lam: Multipliers
    d: np.ndarray
    psi: float
    phi: float
    kkt: float
    inner_iters: int


def _flat(lam: LambdaLike, ctx: SubproblemContext) -> np.ndarray:
    x = lam.stack() if isinstance(lam, Multipliers) else np.asarray(lam, dtype=float)
    if x.shape != (ctx.size,):
        raise DimensionError(f"multiplier vector has shape {x.shape}, expected ({ctx.size},)")
    return x


def check_domain(lam: LambdaLike, ctx: SubproblemContext, tol: float = DOMAIN_TOL) -> None:
    x = _flat(lam, ctx)
    lam_f, lam_g = x[:ctx.M], x[ctx.M:ctx.M + ctx.M_g]
    if np.any(lam_f < -tol) or np.any(lam_g < -tol):
        raise DomainError("negative multiplier")
    if abs(ctx.weights @ lam_f - ctx.budget) > tol * max(1.0, ctx.budget):
        raise DomainError(
            f"lam_f violates its simplex constraint: {ctx.weights @ lam_f} != {ctx.budget}")


def _phi(x: np.ndarray, ctx: SubproblemContext) -> float:
    return 0.5 * float(x @ ctx.gram @ x) - float(ctx.linear @ x)


def phi_value(lam: LambdaLike, ctx: SubproblemContext) -> float:
    """Dual objective value; ``lam`` must lie in the context's domain."""
    check_domain(lam, ctx)
    x = _flat(lam, ctx)
    v = ctx.J @ (ctx.A_ag.T @ x)
    return 0.5 * float(v @ v) - float(ctx.linear @ x)


def phi_gradient(lam: LambdaLike, ctx: SubproblemContext) -> np.ndarray:
    """``A_ag J^T J A_ag^T lam - [0; c_g g; c_h h]`` (no domain check)."""
    return ctx.gram @ _flat(lam, ctx) - ctx.linear


def phi_gradient_estimate(lam, A_ag, J1, J2, linear1) -> np.ndarray:
    """Double-sample estimate ``A_ag J2^T J1 A_ag^T lam - linear1``.

    ``J1`` and ``J2`` must come from independent draws; ``linear1`` is the
    ``[0; c_g g; c_h h]`` vector evaluated on the first draw. The product of
    independent factors keeps the estimate unbiased for the Gram term.
    """
    u = J1 @ (A_ag.T @ lam)
    return A_ag @ (J2.T @ u) - linear1


def project_weighted_simplex(p, w, b: float) -> np.ndarray:
    """Euclidean projection of ``p`` onto ``{x >= 0 : w^T x = b}``.

    The solution is ``max(0, p - mu * w)``; ``mu`` is located by sorting the
    breakpoints ``p_i / w_i``.
    """
    p = np.asarray(p, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0) or not b > 0:
        raise ValueError("weights and budget must be strictly positive")
    ratios = p / w
    order = np.argsort(-ratios, kind="stable")
    ws, ps = w[order], p[order]
    mus = (np.cumsum(ws * ps) - b) / np.cumsum(ws * ws)
    k = np.nonzero(mus < ratios[order])[0][-1]
    return np.maximum(p - mus[k] * w, 0.0)


def _project_flat(x: np.ndarray, ctx: SubproblemContext) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericalError("non-finite multipliers")
    out = x.copy()
    M, M_g = ctx.M, ctx.M_g
    out[:M] = project_weighted_simplex(x[:M], ctx.weights, ctx.budget)
    out[M:M + M_g] = np.maximum(x[M:M + M_g], 0.0)
    return out


def project_multipliers(lam: LambdaLike, ctx: SubproblemContext) -> Multipliers:
    """Projection onto the multiplier domain; the three blocks are projected separately."""
    return Multipliers.split(_project_flat(_flat(lam, ctx), ctx), ctx.M, ctx.M_g)


def solve_pgd(ctx: SubproblemContext, lam0: Optional[LambdaLike] = None,
              gamma: float = DEFAULT_INNER_STEP, K: int = DEFAULT_INNER_ITERS,
              tol: float = DEFAULT_INNER_TOL) -> SubproblemResult:
    """Projected gradient descent on ``phi``.

    Stops once the gradient mapping ``|lam - P(lam - gamma grad)| / gamma`` is
    at most ``tol`` or after ``K`` steps. A step that increases ``phi`` is
    discarded and ``gamma`` halved.
    """
    if not gamma > 0:
        raise ValueError("inner step size must be positive")
    x = _project_flat(_flat(ctx.initial_multipliers() if lam0 is None else lam0, ctx), ctx)
    phi = _phi(x, ctx)
    iters = 0
    while iters < K:
        grad = ctx.gram @ x - ctx.linear
        x_new = _project_flat(x - gamma * grad, ctx)
        if np.linalg.norm(x_new - x) <= tol * gamma:
            break
        iters += 1
        phi_new = _phi(x_new, ctx)
        if phi_new > phi + 1e-14 * max(1.0, abs(phi)):
            gamma *= 0.5
            continue
        x, phi = x_new, phi_new
    return _result(x, ctx, iters)


def _result(x: np.ndarray, ctx: SubproblemContext, iters: int) -> SubproblemResult:
    lam = Multipliers.split(x, ctx.M, ctx.M_g)
    d = -ctx.J @ (ctx.A_ag.T @ x)
    phi = 0.5 * float(d @ d) - float(ctx.linear @ x)
    res = SubproblemResult(lam=lam, d=d, psi=-phi, phi=phi, kkt=0.0, inner_iters=iters)
    return SubproblemResult(lam=lam, d=d, psi=-phi, phi=phi, kkt=kkt_residual(ctx, res),
                            inner_iters=iters)


def solve_subproblem(J, f, pref: Preference, domain: str = ADAPTIVE, **kwargs
                     ) -> SubproblemResult:
    return solve_pgd(SubproblemContext.build(J, f, pref, domain), **kwargs)


def kkt_residual(ctx: SubproblemContext, res: SubproblemResult) -> float:
    """Stationarity + complementary slackness + feasibility at ``res``."""
    g, h = ctx.g, ctx.h
    stationarity = float(res.d @ res.d)
    slackness = float(res.lam.g @ np.maximum(-g, 0.0))
    return stationarity + slackness + float(np.sum(np.maximum(g, 0.0))) + float(np.sum(np.abs(h)))
