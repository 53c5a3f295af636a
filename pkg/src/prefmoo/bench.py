"""Preference sweeps: ray generation and multi-run orchestration."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .metrics import hypervolume
from .problem import Preference, Problem
from .solvers import ConfigError, RunReport, SolverAbort, SolverConfig, initial_point, run

# A preference may depend on the starting objective value (controlled ascent).
PreferenceSpec = Union[Preference, Callable[[np.ndarray], Preference]]


def uniform_preference_rays(n: int, angle_lo: float = math.pi / 20,
                            angle_hi: float = 9 * math.pi / 20) -> list:
    """``n`` unit rays in the positive quadrant with equally spaced angles, endpoints included."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not (0 < angle_lo <= angle_hi < math.pi / 2):
        raise ValueError("need 0 < angle_lo <= angle_hi < pi/2")
    if n == 1:
        angles = np.array([0.5 * (angle_lo + angle_hi)])
    else:
        angles = np.linspace(angle_lo, angle_hi, n)
    return [np.array([math.cos(a), math.sin(a)]) for a in angles]


@dataclass
class RunOutcome:
    """Either a finished report or the error that stopped the run (possibly with a partial report)."""

    index: int
    seed: int
    report: Optional[RunReport] = None
    error: Optional[str] = None
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class SuiteReport:
    outcomes: list
    hypervolume: Optional[float]
    h_l1: list
    mean_kkt: Optional[float]
    ref: Optional[list] = None
    config: dict = field(default_factory=dict)

    @property
    def reports(self) -> list:
        return [o.report for o in self.outcomes]

    @property
    def final_points(self) -> list:
        return [o.report.F_final for o in self.outcomes if o.ok]


def _resolve(pref: PreferenceSpec, problem: Problem, theta0) -> Preference:
    if isinstance(pref, Preference):
        return pref
    return pref(problem.objective(theta0))


def _one(problem: Problem, pref: PreferenceSpec, cfg: SolverConfig, index: int,
         theta0=None) -> RunOutcome:
    seed = cfg.seed + index
    cfg_i = cfg.replace(seed=seed)
    try:
        theta = initial_point(problem, cfg_i) if theta0 is None else np.asarray(theta0, float)
        report = run(problem, _resolve(pref, problem, theta), cfg_i, theta)
        return RunOutcome(index=index, seed=seed, report=report)
    except SolverAbort as exc:
        return RunOutcome(index=index, seed=seed, report=exc.report, error=str(exc),
                          status=exc.report.status)
    except (ConfigError, ValueError, FloatingPointError) as exc:
        return RunOutcome(index=index, seed=seed, error=str(exc), status="error")


def default_reference(points: Sequence[np.ndarray]) -> np.ndarray:
    """Component-wise worst value among ``points``, pushed out by 10%."""
    P = np.asarray(points, dtype=float)
    worst = P.max(axis=0)
    return worst + 0.1 * np.maximum(np.abs(worst), 1e-12)


def run_suite(problem: Problem, preferences: Sequence[PreferenceSpec], cfg: SolverConfig,
              parallelism: int = 1, ref=None, theta0s=None) -> SuiteReport:
    """One run per preference with seed ``cfg.seed + index``.

    Failed runs are kept in the report with their error; they do not stop
    siblings. Outcomes are ordered as ``preferences`` whatever the worker count.
    Hypervolume uses ``ref`` or, if absent, :func:`default_reference` of the
    successful final points (``None`` for a single objective or > 4 objectives).
    """
    preferences = list(preferences)
    if not preferences:
        raise ValueError("run_suite needs at least one preference")
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    starts = [None] * len(preferences) if theta0s is None else list(theta0s)
    if len(starts) != len(preferences):
        raise ValueError("one starting point per preference is required")

    jobs = list(enumerate(zip(preferences, starts)))
    if parallelism == 1:
        outcomes = [_one(problem, p, cfg, i, th) for i, (p, th) in jobs]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            futures = [pool.submit(_one, problem, p, cfg, i, th) for i, (p, th) in jobs]
            outcomes = [f.result() for f in futures]

    good = [o for o in outcomes if o.ok]
    points = [o.report.F_final for o in good]
    hv, ref_out = None, None
    if points and 2 <= problem.M <= 4:
        ref_arr = default_reference(points) if ref is None else np.asarray(ref, dtype=float)
        hv = hypervolume(points, ref_arr)
        ref_out = [float(x) for x in ref_arr]
    h_l1 = [o.report.last.h_l1 if o.report and o.report.trajectory else None for o in outcomes]
    mean_kkt = float(np.mean([o.report.last.kkt for o in good])) if good else None
    return SuiteReport(outcomes=outcomes, hypervolume=hv, h_l1=h_l1, mean_kkt=mean_kkt,
                       ref=ref_out, config=cfg.to_dict())
