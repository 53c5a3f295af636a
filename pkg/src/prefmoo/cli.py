"""Batch command-line front end.

Configs are JSON documents::

    {
      "problem": {"kind": "synthetic_concave", "q": 20},
      "preference": {
        "cone": {"kind": "orthant"},
        "constraint": {"kind": "ray", "ray": [1, 1]},
        "c_h": 1.0
      },
      "solver": {"variant": "meta", "alpha": 0.05, "T": 100},
      "suite": {"kind": "uniform_rays", "n": 5}
    }

Unknown keys are rejected at every level. See the README for the complete schema.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from .bench import SuiteReport, run_suite, uniform_preference_rays
from .cone import ConeError, controlled_ascent_cone, ray_to_equality, rays_to_halfspaces, \
    two_points_to_equality
from .metrics import synthetic_front
from .problem import (
    DimensionError,
    Preference,
    Problem,
    finite_sum_problem,
    quadratic_problem,
    synthetic_concave,
)
from .solvers import (
    LINEAR_SCALARIZATION,
    META,
    ConfigError,
    RunReport,
    SolverAbort,
    SolverConfig,
    initial_point,
    run,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3

OUT_ENV = "PREFMOO_OUT"
DEFAULT_OUT = "prefmoo_out"

_TOP_KEYS = {"problem", "preference", "solver", "suite", "output"}
_SOLVER_KEYS = {f.name for f in dataclasses.fields(SolverConfig)}


class ValidationError(ValueError):
    """Config rejected before any computation."""


def _keys(section: dict, allowed: set, where: str) -> None:
    if not isinstance(section, dict):
        raise ValidationError(f"{where} must be an object")
    unknown = set(section) - allowed
    if unknown:
        raise ValidationError(f"unknown key(s) in {where}: {sorted(unknown)}")


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ValidationError(f"{where} needs {key!r}")
    return section[key]


def _vector(x, where: str, n: Optional[int] = None) -> list:
    try:
        v = [float(t) for t in x]
    except (TypeError, ValueError):
        raise ValidationError(f"{where} must be a list of numbers") from None
    if not all(math.isfinite(t) for t in v):
        raise ValidationError(f"{where} must be finite")
    if n is not None and len(v) != n:
        raise ValidationError(f"{where} has length {len(v)}, expected {n}")
    return v


def _matrix(x, where: str, cols: Optional[int] = None) -> list:
    if not isinstance(x, list):
        raise ValidationError(f"{where} must be a list of rows")
    rows = [_vector(r, f"{where} row", cols) for r in x]
    if rows and len({len(r) for r in rows}) != 1:
        raise ValidationError(f"{where} rows differ in length")
    return rows


# ---------------------------------------------------------------- problems

def _norm_problem(p: dict) -> dict:
    _keys(p, {"kind", "q", "centers", "scales", "samples"}, "problem")
    kind = _require(p, "kind", "problem")
    if kind == "synthetic_concave":
        _keys(p, {"kind", "q"}, "problem")
        q = p.get("q", 20)
        if not isinstance(q, int) or isinstance(q, bool) or q < 1:
            raise ValidationError("problem.q must be a positive integer")
        return {"kind": kind, "q": q}
    if kind == "quadratic":
        _keys(p, {"kind", "centers", "scales"}, "problem")
        centers = _matrix(_require(p, "centers", "problem"), "problem.centers")
        if len(centers) < 1:
            raise ValidationError("problem.centers must not be empty")
        scales = _vector(p.get("scales", [1.0] * len(centers)), "problem.scales", len(centers))
        if any(s <= 0 for s in scales):
            raise ValidationError("problem.scales must be positive")
        return {"kind": kind, "centers": centers, "scales": scales}
    if kind == "finite_sum_quadratic":
        _keys(p, {"kind", "samples"}, "problem")
        samples = _require(p, "samples", "problem")
        if not isinstance(samples, list) or not samples:
            raise ValidationError("problem.samples must be a non-empty list of center matrices")
        mats = [_matrix(s, "problem.samples[]") for s in samples]
        shapes = {(len(m), len(m[0]) if m else 0) for m in mats}
        if len(shapes) != 1 or 0 in shapes.pop():
            raise ValidationError("all samples must have the same non-empty shape")
        return {"kind": kind, "samples": mats}
    raise ValidationError(f"unknown problem kind {kind!r}")


def build_problem(p: dict) -> Problem:
    if p["kind"] == "synthetic_concave":
        return synthetic_concave(p["q"])
    if p["kind"] == "quadratic":
        return quadratic_problem(p["centers"], p["scales"])
    return finite_sum_problem([quadratic_problem(c) for c in p["samples"]])


def _problem_dims(p: dict) -> tuple[int, int]:
    if p["kind"] == "synthetic_concave":
        return p["q"], 2
    if p["kind"] == "quadratic":
        return len(p["centers"][0]), len(p["centers"])
    return len(p["samples"][0][0]), len(p["samples"][0])


# ------------------------------------------------------------- preferences

def _norm_cone(c: dict, M: int) -> dict:
    kind = _require(c, "kind", "preference.cone")
    if kind == "orthant":
        _keys(c, {"kind"}, "preference.cone")
        return {"kind": kind}
    if kind == "matrix":
        _keys(c, {"kind", "A"}, "preference.cone")
        A = _matrix(_require(c, "A", "preference.cone"), "preference.cone.A", M)
        if len(A) != M or np.linalg.matrix_rank(np.array(A)) < M:
            raise ValidationError(f"preference.cone.A must be a full-rank {M}x{M} matrix")
        return {"kind": kind, "A": A}
    if kind == "rays":
        _keys(c, {"kind", "rays"}, "preference.cone")
        rays = _matrix(_require(c, "rays", "preference.cone"), "preference.cone.rays", M)
        try:
            rays_to_halfspaces(np.array(rays).T)
        except ConeError as exc:
            raise ValidationError(f"invalid cone: {exc}") from None
        return {"kind": kind, "rays": rays}
    if kind == "controlled_ascent":
        _keys(c, {"kind", "F_go", "base_rays"}, "preference.cone")
        F_go = _vector(_require(c, "F_go", "preference.cone"), "preference.cone.F_go", M)
        base = _matrix(c.get("base_rays", np.eye(M).tolist()), "preference.cone.base_rays", M)
        try:
            rays_to_halfspaces(np.array(base).T)
        except ConeError as exc:
            raise ValidationError(f"invalid base cone: {exc}") from None
        return {"kind": kind, "F_go": F_go, "base_rays": base}
    raise ValidationError(f"unknown cone kind {kind!r}")


def _norm_constraint(c: dict, M: int) -> dict:
    kind = _require(c, "kind", "preference.constraint")
    if kind == "none":
        _keys(c, {"kind"}, "preference.constraint")
        return {"kind": kind}
    if kind == "ray":
        _keys(c, {"kind", "ray"}, "preference.constraint")
        ray = _vector(_require(c, "ray", "preference.constraint"), "preference.constraint.ray", M)
        if not any(ray):
            raise ValidationError("preference ray must be non-zero")
        return {"kind": kind, "ray": ray}
    if kind == "two_point":
        _keys(c, {"kind", "F1", "F2"}, "preference.constraint")
        F1 = _vector(_require(c, "F1", "preference.constraint"), "preference.constraint.F1", M)
        F2 = _vector(_require(c, "F2", "preference.constraint"), "preference.constraint.F2", M)
        if F1 == F2:
            raise ValidationError("two_point constraint needs distinct points")
        return {"kind": kind, "F1": F1, "F2": F2}
    if kind == "matrices":
        _keys(c, {"kind", "B_g", "b_g", "B_h", "b_h"}, "preference.constraint")
        B_g = _matrix(c.get("B_g", []), "preference.constraint.B_g", M)
        B_h = _matrix(c.get("B_h", []), "preference.constraint.B_h", M)
        b_g = _vector(c.get("b_g", [0.0] * len(B_g)), "preference.constraint.b_g", len(B_g))
        b_h = _vector(c.get("b_h", [0.0] * len(B_h)), "preference.constraint.b_h", len(B_h))
        return {"kind": kind, "B_g": B_g, "b_g": b_g, "B_h": B_h, "b_h": b_h}
    raise ValidationError(f"unknown constraint kind {kind!r}")


def _constraint_arrays(c: dict, M: int) -> dict:
    if c["kind"] == "none":
        return {}
    if c["kind"] == "ray":
        B_h, b_h = ray_to_equality(c["ray"])
        return {"B_h": B_h, "b_h": b_h}
    if c["kind"] == "two_point":
        B_h, b_h = two_points_to_equality(c["F1"], c["F2"])
        return {"B_h": B_h, "b_h": b_h}
    out = {}
    if c["B_g"]:
        out.update(B_g=np.array(c["B_g"]), b_g=np.array(c["b_g"]))
    if c["B_h"]:
        out.update(B_h=np.array(c["B_h"]), b_h=np.array(c["b_h"]))
    return out


def _static_A(cone: dict, M: int) -> Optional[np.ndarray]:
    if cone["kind"] == "orthant":
        return np.eye(M)
    if cone["kind"] == "matrix":
        return np.array(cone["A"])
    if cone["kind"] == "rays":
        return rays_to_halfspaces(np.array(cone["rays"]).T)
    return None


def make_preference(cone: dict, constraint: dict, c_g: float, c_h: float, M: int
                    ) -> Callable[[np.ndarray], Preference] | Preference:
    """A fixed :class:`Preference` or, for controlled ascent, a function of ``F0``."""
    arrays = _constraint_arrays(constraint, M)
    A = _static_A(cone, M)
    if A is not None:
        return Preference(A=A, c_g=c_g, c_h=c_h, **arrays)
    F_go = np.array(cone["F_go"])
    base = np.array(cone["base_rays"]).T

    def build(F0):
        return Preference(A=controlled_ascent_cone(F0, F_go, base).A, c_g=c_g, c_h=c_h, **arrays)

    return build


def _norm_preference(p: dict, M: int) -> dict:
    _keys(p, {"cone", "constraint", "ray", "c_g", "c_h"}, "preference")
    if "ray" in p and "constraint" in p:
        raise ValidationError("give either preference.ray or preference.constraint, not both")
    constraint = {"kind": "ray", "ray": p["ray"]} if "ray" in p else p.get("constraint",
                                                                             {"kind": "none"})
    out = {
        "cone": _norm_cone(p.get("cone", {"kind": "orthant"}), M),
        "constraint": _norm_constraint(constraint, M),
        "c_g": float(p.get("c_g", 1.0)),
        "c_h": float(p.get("c_h", 1.0)),
    }
    if not (out["c_g"] > 0 and out["c_h"] > 0):
        raise ValidationError("c_g and c_h must be positive")
    return out


# ---------------------------------------------------------------- solver / suite

def _norm_solver(s: dict) -> dict:
    _keys(s, _SOLVER_KEYS, "solver")
    try:
        cfg = SolverConfig(**s)
    except (TypeError, ConfigError) as exc:
        raise ValidationError(f"solver: {exc}") from None
    return cfg.to_dict()


def _norm_suite(s: Optional[dict], M: int) -> Optional[dict]:
    if s is None:
        return None
    kind = _require(s, "kind", "suite")
    if M != 2 and kind == "uniform_rays":
        raise ValidationError("uniform_rays suites need two objectives")
    if kind == "uniform_rays":
        _keys(s, {"kind", "n", "angle_lo", "angle_hi"}, "suite")
        n = s.get("n", 5)
        if not isinstance(n, int) or isinstance(n, bool) or n < 1:
            raise ValidationError("suite.n must be a positive integer")
        lo = float(s.get("angle_lo", math.pi / 20))
        hi = float(s.get("angle_hi", 9 * math.pi / 20))
        if not (0 < lo <= hi < math.pi / 2):
            raise ValidationError("suite angles need 0 < angle_lo <= angle_hi < pi/2")
        return {"kind": kind, "n": n, "angle_lo": lo, "angle_hi": hi}
    if kind == "rays":
        _keys(s, {"kind", "rays"}, "suite")
        rays = _matrix(_require(s, "rays", "suite"), "suite.rays", M)
        if not rays or any(not any(r) for r in rays):
            raise ValidationError("suite.rays must be a non-empty list of non-zero rays")
        return {"kind": kind, "rays": rays}
    raise ValidationError(f"unknown suite kind {kind!r}")


def _norm_output(o: dict) -> dict:
    _keys(o, {"dir", "plot"}, "output")
    out = {}
    if "dir" in o:
        if not isinstance(o["dir"], str) or not o["dir"]:
            raise ValidationError("output.dir must be a non-empty string")
        out["dir"] = o["dir"]
    plot = o.get("plot", False)
    if not isinstance(plot, bool):
        raise ValidationError("output.plot must be true or false")
    out["plot"] = plot
    return out


@dataclass
class ExperimentSpec:
    """Validated, normalized experiment description."""

    config: dict
    problem: Problem
    preference: Any
    solver: SolverConfig

    @property
    def M(self) -> int:
        return self.problem.M

    def suite_rays(self) -> Optional[list]:
        s = self.config.get("suite")
        if s is None:
            return None
        if s["kind"] == "uniform_rays":
            return uniform_preference_rays(s["n"], s["angle_lo"], s["angle_hi"])
        return [np.array(r) for r in s["rays"]]

    def suite_preferences(self) -> list:
        """One preference per suite ray (ray equality replaces the configured constraint)."""
        rays = self.suite_rays()
        if rays is None:
            return [self.preference]
        p = self.config["preference"]
        return [make_preference(p["cone"], {"kind": "ray", "ray": list(r)}, p["c_g"], p["c_h"],
                                self.M) for r in rays]

    def to_dict(self) -> dict:
        return json.loads(json.dumps(self.config))


def parse_config(text: str) -> ExperimentSpec:
    """Parse and validate a JSON config; raises :class:`ValidationError`."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config is not valid JSON: {exc}") from None
    return normalize_config(raw)


def normalize_config(raw: dict) -> ExperimentSpec:
    _keys(raw, _TOP_KEYS, "config")
    problem_cfg = _norm_problem(_require(raw, "problem", "config"))
    q, M = _problem_dims(problem_cfg)
    pref_cfg = _norm_preference(raw.get("preference", {}), M)
    solver_cfg = _norm_solver(raw.get("solver", {}))
    suite_cfg = _norm_suite(raw.get("suite"), M)
    output_cfg = _norm_output(raw.get("output", {}))
    solver = SolverConfig(**solver_cfg)

    has_ineq = pref_cfg["constraint"]["kind"] == "matrices" and pref_cfg["constraint"]["B_g"]
    if has_ineq and solver.variant not in (META, LINEAR_SCALARIZATION):
        raise ValidationError(
            f"solver variant {solver.variant!r} supports equality constraints only")
    if solver.variant == LINEAR_SCALARIZATION:
        if solver.weights is None:
            raise ValidationError("linear_scalarization needs solver.weights")
        if len(solver.weights) != M:
            raise ValidationError(f"solver.weights must have length {M}")
    try:
        problem = build_problem(problem_cfg)
        preference = make_preference(pref_cfg["cone"], pref_cfg["constraint"], pref_cfg["c_g"],
                                     pref_cfg["c_h"], M)
    except (DimensionError, ConeError, ConfigError, ValueError) as exc:
        raise ValidationError(str(exc)) from None

    config = {"problem": problem_cfg, "preference": pref_cfg, "solver": solver_cfg,
              "output": output_cfg}
    if suite_cfg is not None:
        config["suite"] = suite_cfg
    return ExperimentSpec(config=config, problem=problem, preference=preference, solver=solver)


# ---------------------------------------------------------------- outputs

def trajectory_header(M: int) -> list:
    return ["t"] + [f"f_{m + 1}" for m in range(M)] + ["norm_d", "g_plus_l1", "h_l1", "kkt"]


def trajectory_csv(report: RunReport) -> str:
    M = report.F_final.size
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(trajectory_header(M))
    for r in report.trajectory:
        w.writerow([r.t] + [repr(float(x)) for x in r.F]
                   + [repr(float(x)) for x in (r.norm_d, r.g_plus_l1, r.h_l1, r.kkt)])
    return buf.getvalue()


def _run_summary(report: Optional[RunReport], index: int = 0, seed: Optional[int] = None,
                 status: str = "ok", error: Optional[str] = None) -> dict:
    out: dict = {"index": index, "seed": seed, "status": status, "error": error}
    if report is not None:
        out.update(iterations=report.iterations, wall_time=report.wall_time,
                   final=report.final, theta_final=[float(x) for x in report.theta_final],
                   F_final=[float(x) for x in report.F_final])
    return out


def summary_dict(result, config: dict) -> dict:
    if isinstance(result, SuiteReport):
        runs = [_run_summary(o.report, o.index, o.seed, o.status, o.error)
                for o in result.outcomes]
        return {"config": config, "runs": runs, "hypervolume": result.hypervolume,
                "ref": result.ref, "h_l1": result.h_l1, "mean_kkt": result.mean_kkt}
    return {"config": config,
            "runs": [_run_summary(result, 0, result.config.get("seed"), result.status,
                                  result.error)]}


def _svg(points, rays, front: Optional[np.ndarray], size: int = 400) -> str:
    pts = [np.asarray(p, float) for p in points]
    extent = [np.zeros(2)] + pts + ([front.max(axis=0)] if front is not None else [])
    hi = max(float(np.max(np.abs(extent))), 1e-12) * 1.1
    pad = 30

    def xy(v):
        return (pad + (size - 2 * pad) * v[0] / hi, size - pad - (size - 2 * pad) * v[1] / hi)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">',
             f'<rect width="{size}" height="{size}" fill="white"/>']
    x0, y0 = xy((0, 0))
    x1, y1 = xy((hi, 0))
    x2, y2 = xy((0, hi))
    parts.append(f'<path d="M{x0:.2f},{y0:.2f} L{x1:.2f},{y1:.2f} M{x0:.2f},{y0:.2f} '
                 f'L{x2:.2f},{y2:.2f}" stroke="black"/>')
    parts.append(f'<text x="{x1 - 20:.0f}" y="{y0 + 20:.0f}" font-size="12">f1</text>')
    parts.append(f'<text x="{x0 - 25:.0f}" y="{y2 + 10:.0f}" font-size="12">f2</text>')
    if front is not None:
        path = " ".join(f"{a:.2f},{b:.2f}" for a, b in (xy(v) for v in front))
        parts.append(f'<polyline points="{path}" fill="none" stroke="gray"/>')
    for r in rays:
        r = np.asarray(r, float)
        end = xy(r / np.max(np.abs(r)) * hi)
        parts.append(f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{end[0]:.2f}" y2="{end[1]:.2f}" '
                     f'stroke="steelblue" stroke-dasharray="4,3"/>')
    for p in pts:
        a, b = xy(p)
        parts.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="4" fill="crimson"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_outputs(result, spec: ExperimentSpec, out_dir, plot: bool = False) -> list:
    """Write trajectory CSV(s), ``summary.json`` and optionally ``plot.svg``; return the paths."""
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if isinstance(result, SuiteReport):
            for o in result.outcomes:
                if o.report is not None:
                    path = out / f"trajectory_{o.index:03d}.csv"
                    path.write_text(trajectory_csv(o.report))
                    written.append(path)
            points = result.final_points
        else:
            path = out / "trajectory.csv"
            path.write_text(trajectory_csv(result))
            written.append(path)
            points = [result.F_final]
        path = out / "summary.json"
        path.write_text(json.dumps(summary_dict(result, spec.to_dict()), indent=2) + "\n")
        written.append(path)
        if plot and spec.M == 2:
            rays = spec.suite_rays()
            if rays is None and spec.config["preference"]["constraint"]["kind"] == "ray":
                rays = [spec.config["preference"]["constraint"]["ray"]]
            front = None
            if spec.config["problem"]["kind"] == "synthetic_concave":
                front = synthetic_front(np.linspace(-1.0, 1.0, 201))
            path = out / "plot.svg"
            path.write_text(_svg(points, rays or [], front))
            written.append(path)
    except OSError as exc:
        raise OSError(f"cannot write outputs to {out}: {exc}") from exc
    return written


def load_summary(path) -> dict:
    return json.loads(Path(path).read_text())


# ---------------------------------------------------------------- entry point

def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="prefmoo",
                                 description="Preference-guided multi-objective optimization")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "single run"), ("suite", "one run per suite preference")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="path to a JSON config")
        p.add_argument("--seed", type=int, default=None, help="override solver.seed")
        p.add_argument("--out", default=None,
                       help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
        p.add_argument("--parallel", type=int, default=1, help="worker threads for suites")
        p.add_argument("--plot", action="store_true", help="write plot.svg")
    return ap


def _err(msg: str) -> None:
    print(f"prefmoo: {msg}", file=sys.stderr)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        _err(f"cannot read config {args.config}: {exc}")
        return EXIT_IO
    try:
        spec = parse_config(text)
        if args.seed is not None:
            spec = normalize_config({**spec.to_dict(), "solver": {**spec.config["solver"],
                                                                  "seed": args.seed}})
        if args.parallel < 1:
            raise ValidationError("--parallel must be >= 1")
    except ValidationError as exc:
        _err(f"invalid config: {exc}")
        return EXIT_VALIDATION

    out_dir = args.out or spec.config["output"].get("dir") or os.environ.get(OUT_ENV) \
        or DEFAULT_OUT
    plot = args.plot or spec.config["output"]["plot"]
    code = EXIT_OK
    try:
        if args.command == "run":
            try:
                theta0 = initial_point(spec.problem, spec.solver)
                pref = spec.preference
                if not isinstance(pref, Preference):
                    pref = pref(spec.problem.objective(theta0))
                result = run(spec.problem, pref, spec.solver, theta0)
            except SolverAbort as exc:
                _err(str(exc))
                result, code = exc.report, EXIT_NUMERICAL
            except (ConfigError, ConeError, DimensionError) as exc:
                _err(f"invalid config: {exc}")
                return EXIT_VALIDATION
        else:
            result = run_suite(spec.problem, spec.suite_preferences(), spec.solver,
                               parallelism=args.parallel)
            for o in result.outcomes:
                if not o.ok:
                    _err(f"run {o.index}: {o.error}")
                    code = EXIT_NUMERICAL
        written = emit_outputs(result, spec, out_dir, plot=plot)
    except OSError as exc:
        _err(str(exc))
        return EXIT_IO
    for path in written:
        print(path)
    return code


if __name__ == "__main__":
    sys.exit(main())
