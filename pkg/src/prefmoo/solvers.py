"""Outer-loop solvers: double-loop meta method, single-loop and stochastic variants, and
linear scalarization as a baseline."""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .problem import Preference, Problem, eval_constraints
from .subproblem import (
    ADAPTIVE,
    DEFAULT_INNER_ITERS,
    DEFAULT_INNER_STEP,
    DEFAULT_INNER_TOL,
    DOMAINS,
    SIMPLIFIED,
    DomainError,
    NumericalError,
    SubproblemContext,
    _project_flat,
    phi_gradient_estimate,
    solve_pgd,
)

META = "meta"
SINGLE_LOOP = "single_loop"
STOCHASTIC = "stochastic"
LINEAR_SCALARIZATION = "linear_scalarization"
VARIANTS = (META, SINGLE_LOOP, STOCHASTIC, LINEAR_SCALARIZATION)

CONSTANT = "constant"
INV_SQRT_T = "inv_sqrt_T"
SCHEDULES = (CONSTANT, INV_SQRT_T)

INITS = ("normal", "easy", "hard", "zeros")


class ConfigError(ValueError):
    """Invalid solver configuration or a solver/preference combination that is not supported."""


class SolverAbort(RuntimeError):
    """A run stopped on a numerical failure; ``report`` holds the trajectory so far."""

    def __init__(self, message: str, report: "RunReport"):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class SolverConfig:
    variant: str = META
    alpha: float = 0.05
    alpha_schedule: str = CONSTANT
    # None -> alpha (gamma / alpha = 1)
    gamma: Optional[float] = None
    T: int = 100
    inner_gamma: float = DEFAULT_INNER_STEP
    inner_K: int = DEFAULT_INNER_ITERS
    inner_tol: float = DEFAULT_INNER_TOL
    stop_kkt: float = 0.0
    seed: int = 0
    # None -> adaptive for the meta solver, simplified otherwise
    domain: Optional[str] = None
    record_every: int = 1
    record_theta: bool = False
    weights: Optional[tuple] = None
    init: str = "normal"
    # None -> 1/sqrt(q) for "normal"
    init_scale: Optional[float] = None
    warm_start: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown solver variant {self.variant!r}")
        if self.alpha_schedule not in SCHEDULES:
            raise ConfigError(f"unknown step-size schedule {self.alpha_schedule!r}")
        if not (self.alpha > 0 and self.T > 0):
            raise ConfigError("alpha and T must be positive")
        if self.gamma is None:
            object.__setattr__(self, "gamma", self.alpha)
        if not self.gamma > 0:
            raise ConfigError("gamma must be positive")
        if not (self.inner_gamma > 0 and self.inner_K > 0 and self.inner_tol >= 0):
            raise ConfigError("invalid inner solver settings")
        if self.domain is None:
            object.__setattr__(self, "domain", ADAPTIVE if self.variant == META else SIMPLIFIED)
        if self.domain not in DOMAINS:
            raise ConfigError(f"unknown multiplier domain {self.domain!r}")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1")
        if self.init not in INITS:
            raise ConfigError(f"unknown initialization {self.init!r}")
        if self.weights is not None:
            w = tuple(float(x) for x in self.weights)
            if any(x < 0 for x in w) or abs(sum(w) - 1.0) > 1e-9:
                raise ConfigError("scalarization weights must be non-negative and sum to 1")
            object.__setattr__(self, "weights", w)

    def step_sizes(self) -> tuple[float, float]:
        if self.alpha_schedule == INV_SQRT_T:
            s = 1.0 / math.sqrt(self.T)
            return self.alpha * s, self.gamma * s
        return self.alpha, self.gamma

    def replace(self, **changes) -> "SolverConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        if out["weights"] is not None:
            out["weights"] = list(out["weights"])
        return out


@dataclass
class IterateRecord:
    t: int
    F: np.ndarray
    norm_d: float
    g_plus_l1: float
    h_l1: float
    kkt: float
    theta: Optional[np.ndarray] = None


@dataclass
class RunReport:
    trajectory: list
    theta_final: np.ndarray
    F_final: np.ndarray
    iterations: int
    wall_time: float
    config: dict
    final: dict = field(default_factory=dict)
    status: str = "ok"
    error: Optional[str] = None

    @property
    def last(self) -> IterateRecord:
        return self.trajectory[-1]


def initial_point(problem: Problem, cfg: SolverConfig, rng: Optional[np.random.Generator] = None
                  ) -> np.ndarray:
    """Draw ``theta_0`` according to ``cfg.init``.

    ``normal``: i.i.d. ``N(0, s^2)`` with ``s = cfg.init_scale`` (default ``1/sqrt(q)``);
    ``easy``: uniform on ``[-0.3, 0.3]``; ``hard``: one random sign for the whole
    vector times magnitudes uniform on ``[0.15, 0.5]``; ``zeros``.
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    q = problem.q
    if cfg.init == "normal":
        scale = 1.0 / math.sqrt(q) if cfg.init_scale is None else cfg.init_scale
        return scale * rng.standard_normal(q)
    if cfg.init == "easy":
        return rng.uniform(-0.3, 0.3, q)
    if cfg.init == "hard":
        sign = 1.0 if rng.random() < 0.5 else -1.0
        return sign * rng.uniform(0.15, 0.5, q)
    return np.zeros(q)


class _Recorder:
    def __init__(self, cfg: SolverConfig, T: int):
        self.cfg = cfg
        self.T = T
        self.records: list[IterateRecord] = []
        self.start = time.perf_counter()

    def want(self, t: int) -> bool:
        return t % self.cfg.record_every == 0 or t == self.T

    def add(self, t, F, d, g, h, kkt, theta, force=False):
        if not (force or self.want(t)):
            return
        if self.records and self.records[-1].t == t:
            return
        self.records.append(IterateRecord(
            t=t, F=np.array(F, dtype=float), norm_d=float(np.linalg.norm(d)),
            g_plus_l1=float(np.sum(np.maximum(g, 0.0))), h_l1=float(np.sum(np.abs(h))),
            kkt=float(kkt), theta=np.array(theta) if self.cfg.record_theta else None))

    def report(self, theta, F, t, final: dict, status="ok", error=None) -> RunReport:
        return RunReport(trajectory=self.records, theta_final=np.array(theta, dtype=float),
                         F_final=np.array(F, dtype=float), iterations=t,
                         wall_time=time.perf_counter() - self.start, config=self.cfg.to_dict(),
                         final=final, status=status, error=error)


def _final_metrics(rec: IterateRecord) -> dict:
    return {"F": [float(x) for x in rec.F], "norm_d": rec.norm_d, "g_plus_l1": rec.g_plus_l1,
            "h_l1": rec.h_l1, "kkt": rec.kkt}


def _check_finite(theta, F, J, rec: _Recorder, t: int):
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(F)) and np.all(np.isfinite(J))):
        raise NumericalError(f"non-finite iterate at t={t}")


def _abort(rec: _Recorder, theta, F, t, exc: Exception):
    status = "domain_error" if isinstance(exc, DomainError) else "numerical_error"
    last = rec.records[-1] if rec.records else None
    report = rec.report(theta, F, t, _final_metrics(last) if last else {}, status=status,
                        error=str(exc))
    raise SolverAbort(f"{status} at t={t}: {exc}", report) from exc


def _start(problem: Problem, cfg: SolverConfig, theta0) -> np.ndarray:
    theta = initial_point(problem, cfg) if theta0 is None else np.array(theta0, dtype=float)
    if theta.shape != (problem.q,):
        raise ConfigError(f"theta0 has shape {theta.shape}, expected ({problem.q},)")
    return theta


def run_meta(problem: Problem, pref: Preference, cfg: SolverConfig, theta0=None) -> RunReport:
    """Double-loop method: solve the subprogram by PGD at every iterate, then step."""
    if cfg.variant != META:
        raise ConfigError(f"run_meta needs variant={META!r}, got {cfg.variant!r}")
    theta = _start(problem, cfg, theta0)
    alpha, _ = cfg.step_sizes()
    rec = _Recorder(cfg, cfg.T)
    lam = None
    F = np.full(problem.M, np.nan)
    t = 0
    try:
        for t in range(cfg.T + 1):
            F, J = problem.value_and_jacobian(theta)
            _check_finite(theta, F, J, rec, t)
            ctx = SubproblemContext.build(J, F, pref, cfg.domain)
            res = solve_pgd(ctx, lam if cfg.warm_start else None, gamma=cfg.inner_gamma,
                            K=cfg.inner_K, tol=cfg.inner_tol)
            stop = t == cfg.T or res.kkt <= cfg.stop_kkt and cfg.stop_kkt > 0
            rec.add(t, F, res.d, ctx.g, ctx.h, res.kkt, theta, force=stop)
            if stop:
                break
            lam = res.lam
            theta = theta + alpha * res.d
    except (NumericalError, DomainError) as exc:
        _abort(rec, theta, F, t, exc)
    return rec.report(theta, F, t, _final_metrics(rec.records[-1]))


def _single_loop(problem: Problem, pref: Preference, cfg: SolverConfig, theta0,
                 stochastic: bool) -> RunReport:
    if pref.M_g > 0:
        raise ConfigError("single-loop solvers support equality constraints only (M_g = 0)")
    if stochastic and problem.sampler is None:
        raise ConfigError(f"problem {problem.name!r} has no stochastic sampler")
    theta = _start(problem, cfg, theta0)
    alpha, gamma = cfg.step_sizes()
    rng = np.random.default_rng(cfg.seed)
    A_ag = pref.A_ag
    rec = _Recorder(cfg, cfg.T)
    lam = None
    F = np.full(problem.M, np.nan)
    t = 0
    try:
        for t in range(cfg.T + 1):
            F, J = problem.value_and_jacobian(theta)
            _check_finite(theta, F, J, rec, t)
            ctx = SubproblemContext.build(J, F, pref, cfg.domain)
            if lam is None:
                lam = ctx.initial_multipliers().stack()
            u = J @ (A_ag.T @ lam)
            d = -u
            g, h = ctx.g, ctx.h
            measure = float(d @ d) + float(h @ h)
            stop = t == cfg.T or measure <= cfg.stop_kkt and cfg.stop_kkt > 0
            rec.add(t, F, d, g, h, float(d @ d) + float(np.sum(np.abs(h))), theta, force=stop)
            if stop:
                break
            if stochastic:
                F1, J1 = problem.sample(theta, rng)
                F2, J2 = problem.sample(theta, rng)
                _check_finite(theta, F1, J1, rec, t)
                _check_finite(theta, F2, J2, rec, t)
                ctx1 = SubproblemContext.build(J1, F1, pref, cfg.domain)
                u1 = J1 @ (A_ag.T @ lam)
                grad = phi_gradient_estimate(lam, A_ag, J1, J2, ctx1.linear)
                theta = theta - alpha * u1
                lam = _project_flat(lam - gamma * grad, ctx1)
            else:
                grad = A_ag @ (J.T @ u) - ctx.linear
                theta = theta + alpha * d
                lam = _project_flat(lam - gamma * grad, ctx)
            if not np.all(np.isfinite(lam)):
                raise NumericalError(f"non-finite multipliers at t={t}")
    except (NumericalError, DomainError) as exc:
        _abort(rec, theta, F, t, exc)
    report = rec.report(theta, F, t, _final_metrics(rec.records[-1]))
    report.final["lam"] = [float(x) for x in lam]
    return report


def run_single_loop(problem: Problem, pref: Preference, cfg: SolverConfig, theta0=None
                    ) -> RunReport:
    """One direction step and one projected-gradient multiplier step per iteration."""
    if cfg.variant != SINGLE_LOOP:
        raise ConfigError(f"run_single_loop needs variant={SINGLE_LOOP!r}, got {cfg.variant!r}")
    return _single_loop(problem, pref, cfg, theta0, stochastic=False)


def run_stochastic(problem: Problem, pref: Preference, cfg: SolverConfig, theta0=None
                   ) -> RunReport:
    """Single-loop updates driven by two independent samples per iteration.

    The first draw gives the direction and the constraint value; the multiplier
    gradient uses the product of the two draws' Jacobians. Recorded diagnostics
    use the exact evaluators.
    """
    if cfg.variant != STOCHASTIC:
        raise ConfigError(f"run_stochastic needs variant={STOCHASTIC!r}, got {cfg.variant!r}")
    return _single_loop(problem, pref, cfg, theta0, stochastic=True)


def pareto_stationarity(J: np.ndarray, tol: float = 1e-10, K: int = 5000) -> float:
    """Squared norm of the min-norm point of the convex hull of the columns of ``J``."""
    M = J.shape[1]
    ctx = SubproblemContext.build(J, np.ones(M), Preference.unconstrained(M), SIMPLIFIED)
    gamma = 1.0 / max(float(np.linalg.norm(ctx.gram, 2)), 1e-12)
    res = solve_pgd(ctx, gamma=gamma, K=K, tol=tol)
    return float(res.d @ res.d)


def run_linear_scalarization(problem: Problem, weights: Sequence[float], cfg: SolverConfig,
                             pref: Optional[Preference] = None, theta0=None) -> RunReport:
    """Gradient descent on ``weights^T F``; constraints in ``pref`` are reported, not enforced.

    The recorded ``kkt`` is the unconstrained Pareto-stationarity residual.
    """
    w = np.asarray(weights, dtype=float)
    if w.shape != (problem.M,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ConfigError("weights must be a length-M probability vector")
    pref = Preference.unconstrained(problem.M) if pref is None else pref
    theta = _start(problem, cfg, theta0)
    alpha, _ = cfg.step_sizes()
    rec = _Recorder(cfg, cfg.T)
    F = np.full(problem.M, np.nan)
    t = 0
    try:
        for t in range(cfg.T + 1):
            F, J = problem.value_and_jacobian(theta)
            _check_finite(theta, F, J, rec, t)
            d = -J @ w
            g, h = eval_constraints(pref, F)
            stop = t == cfg.T
            kkt = pareto_stationarity(J) if (stop or rec.want(t) or cfg.stop_kkt > 0) else 0.0
            stop = stop or (cfg.stop_kkt > 0 and kkt <= cfg.stop_kkt)
            rec.add(t, F, d, g, h, kkt, theta, force=stop)
            if stop:
                break
            theta = theta + alpha * d
    except (NumericalError, DomainError) as exc:
        _abort(rec, theta, F, t, exc)
    return rec.report(theta, F, t, _final_metrics(rec.records[-1]))


def run(problem: Problem, pref: Preference, cfg: SolverConfig, theta0=None) -> RunReport:
    """Dispatch on ``cfg.variant``."""
    if cfg.variant == META:
        return run_meta(problem, pref, cfg, theta0)
    if cfg.variant == SINGLE_LOOP:
        return run_single_loop(problem, pref, cfg, theta0)
    if cfg.variant == STOCHASTIC:
        return run_stochastic(problem, pref, cfg, theta0)
    if cfg.weights is None:
        raise ConfigError("linear scalarization needs weights")
    return run_linear_scalarization(problem, cfg.weights, cfg, pref=pref, theta0=theta0)
