"""Command-line driver: ``mcflab <command> --config <file.toml>``.

Commands
--------
validate  mean-convexity of the domain (and the motion hypotheses when a
          ``[boundary]`` block is present)
solve     continuation up to the largest lambda, final member written out
ladder    every member written out, with per-member invariant checks
diagnose  level-set curvature diagnostics of arrival-time fields
boundary  flow with a boundary moving along a barrier arc
soliton   refinement study of an exact translating soliton

Every run writes ``run.json`` (config echo, versions, residuals, checks and
the ``eps_grid`` of every inequality), ``checks.json`` and ``timings.txt``.
Wall-clock times only go to ``timings.txt`` so the other files are
reproducible byte for byte.

Exit status: 0 success, 2 bad configuration, 3 solver did not converge
(partial results are written), 4 an invariant or precondition failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import platform
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import scipy

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .arrival import (PreconditionError, arrival_residual, curvature_table, level_set_curvature_fields,
                      product_lift_check, ratio_bound_check, regularity_threshold)
from .boundary import (BoundaryMotionSpec, DegenerateOutputError, HypothesisError, limit_surface,
                       solve_boundary_flow, validate_hypotheses)
from .domain import DEFAULTS, DomainSpec, ResolutionError, SpecificationError, build_mask, validate_mean_convex
from .mesh import Grid, ScalarField, read_field_csv, write_field_csv
from .regularize import (DEFAULT_TOL, LadderError, LadderResult, NonConvergenceError, ParameterError,
                         gradient_bound_check, lambda_ladder, probe_mask, translator_inequality_check,
                         u_lambda, uniqueness_check)
from .singular import classify_tangent, detect_singular
from .translator import bowl, grim_reaper, profile_rows, soliton_study

log = logging.getLogger("mcflab")

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_INVARIANT = 0, 2, 3, 4
COMMANDS = ("validate", "solve", "ladder", "diagnose", "boundary", "soliton")
MIN_RESOLUTION = 64


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration

_BLOCK_KEYS = {
    "domain": None,  # kind, n and shape parameters, checked by DomainSpec
    "grid": {"resolution", "margin"},
    "solver": {"schedule", "tol", "max_iter"},
    "diagnostics": {"probe_fraction", "probe_inner", "k_fraction", "eps_reg", "seed", "uniqueness",
                    "residual_tol", "lift_probes"},
    "boundary": {"samples", "limit", "horizon_scale", "horizon_power", "reach_fraction", "validate",
                 "settle_tol", "hausdorff_tol", "max_iter"},
    "soliton": {"family", "c", "sizes", "extent", "trials", "seed", "profile_samples"},
    "output": {"dir"},
}


@dataclass
class RunConfig:
    """Validated run configuration; ``raw`` is the merged table echoed into ``run.json``."""

    raw: dict
    domain: DomainSpec | None
    resolution: int
    margin: float
    schedule: list[float]
    tol: float
    max_iter: int
    diagnostics: dict
    boundary: dict | None
    soliton: dict
    out_dir: Path

    def grid(self) -> Grid:
        if self.domain is None:
            raise ConfigError("a [domain] block is required for this command")
        return self.domain.default_grid(self.resolution, self.margin)


def _number(block: dict, key: str, default, kind=float, positive: bool = False):
    value = block.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number")
    value = kind(value)
    if kind is float and not math.isfinite(value):
        raise ConfigError(f"{key} must be finite")
    if positive and not value > 0:
        raise ConfigError(f"{key} must be positive")
    return value


def load_config(path: str | Path, out: str | None = None, grid_n: int | None = None,
                lambda_max: float | None = None) -> RunConfig:
    """Parse and validate a TOML run file, applying command-line overrides."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    for name, block in raw.items():
        if name not in _BLOCK_KEYS:
            raise ConfigError(f"unknown block [{name}]")
        if not isinstance(block, dict):
            raise ConfigError(f"[{name}] must be a table")
        allowed = _BLOCK_KEYS[name]
        if allowed is not None and set(block) - allowed:
            raise ConfigError(f"unknown keys in [{name}]: {sorted(set(block) - allowed)}")

    domain = None
    if "domain" in raw:
        d = dict(raw["domain"])
        kind = d.pop("kind", None)
        n = d.pop("n", 2)
        if kind not in DEFAULTS:
            raise ConfigError(f"domain.kind must be one of {sorted(DEFAULTS)}")
        try:
            domain = DomainSpec(kind, int(n), d)
        except (SpecificationError, TypeError, ValueError) as exc:
            raise ConfigError(f"[domain]: {exc}") from exc

    g = raw.get("grid", {})
    resolution = grid_n if grid_n is not None else g.get("resolution", 256)
    if isinstance(resolution, bool) or not isinstance(resolution, int):
        raise ConfigError("grid.resolution must be an integer")
    if resolution < MIN_RESOLUTION:
        raise ConfigError(f"grid.resolution must be at least {MIN_RESOLUTION}")
    margin = _number(g, "margin", 0.1)
    if margin < 0:
        raise ConfigError("grid.margin must be non-negative")

    s = raw.get("solver", {})
    schedule = s.get("schedule", [4, 8, 16, 32, 64])
    if not isinstance(schedule, list) or not schedule or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in schedule):
        raise ConfigError("solver.schedule must be a non-empty list of numbers")
    schedule = [float(x) for x in schedule]
    if any(not x > 0 for x in schedule) or any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ConfigError("solver.schedule must be strictly increasing and positive")
    if lambda_max is not None:
        schedule = [x for x in schedule if x <= lambda_max]
        if not schedule:
            raise ConfigError(f"no schedule entry is at most --lambda-max {lambda_max:g}")
    tol = _number(s, "tol", DEFAULT_TOL, positive=True)
    max_iter = _number(s, "max_iter", 60, kind=int, positive=True)

    dg = raw.get("diagnostics", {})
    diagnostics = {
        "probe_fraction": _number(dg, "probe_fraction", 0.9, positive=True),
        "probe_inner": _number(dg, "probe_inner", 0.0),
        "k_fraction": _number(dg, "k_fraction", 0.05, positive=True),
        "eps_reg": _number(dg, "eps_reg", None, positive=True),
        "seed": _number(dg, "seed", 0, kind=int),
        "uniqueness": bool(dg.get("uniqueness", True)),
        "residual_tol": _number(dg, "residual_tol", 0.05, positive=True),
        "lift_probes": _number(dg, "lift_probes", 100, kind=int, positive=True),
    }
    if not diagnostics["probe_inner"] < diagnostics["probe_fraction"] <= 1:
        raise ConfigError("need 0 <= probe_inner < probe_fraction <= 1")

    boundary = None
    if "boundary" in raw:
        b = raw["boundary"]
        samples = b.get("samples", [[0.0, 0.0, 0.0]])
        try:
            samples = np.asarray(samples, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ConfigError("boundary.samples must be rows [t, s_left, s_right]") from exc
        if samples.ndim != 2 or samples.shape[1] != 3:
            raise ConfigError("boundary.samples must be rows [t, s_left, s_right]")
        limit = b.get("limit")
        if limit is not None and (not isinstance(limit, list) or len(limit) != 2):
            raise ConfigError("boundary.limit must be [s_left, s_right]")
        boundary = {
            "samples": samples, "limit": limit,
            "horizon_scale": _number(b, "horizon_scale", 1.0, positive=True),
            "horizon_power": _number(b, "horizon_power", 2.0),
            "reach_fraction": _number(b, "reach_fraction", 0.5, positive=True),
            "settle_tol": _number(b, "settle_tol", 1e-3, positive=True),
            "hausdorff_tol": _number(b, "hausdorff_tol", 0.02, positive=True),
            "max_iter": _number(b, "max_iter", 400, kind=int, positive=True),
            "validate": bool(b.get("validate", True)),
        }
        if not boundary["reach_fraction"] < 1:
            raise ConfigError("boundary.reach_fraction must lie in (0, 1)")

    so = raw.get("soliton", {})
    sizes = so.get("sizes", [1024, 2048])
    if not isinstance(sizes, list) or len(sizes) < 2 or not all(isinstance(x, int) and x >= 16 for x in sizes):
        raise ConfigError("soliton.sizes must list at least two integers >= 16")
    soliton = {
        "family": so.get("family", "grim_reaper"),
        "c": _number(so, "c", 1.0, positive=True),
        "sizes": sizes,
        "extent": _number(so, "extent", None, positive=True),
        "trials": _number(so, "trials", 8, kind=int, positive=True),
        "seed": _number(so, "seed", 0, kind=int),
        "profile_samples": _number(so, "profile_samples", 401, kind=int, positive=True),
    }
    if soliton["family"] not in ("grim_reaper", "bowl"):
        raise ConfigError("soliton.family must be grim_reaper or bowl")

    out_dir = Path(out if out is not None else raw.get("output", {}).get("dir", "mcflab_out"))
    echo = json.loads(json.dumps(raw))
    echo.setdefault("grid", {})["resolution"] = resolution
    echo.setdefault("solver", {})["schedule"] = schedule
    return RunConfig(echo, domain, resolution, margin, schedule, tol, max_iter, diagnostics,
                     boundary, soliton, out_dir)


# ---------------------------------------------------------------------------
# run bookkeeping


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")


def _write_rows(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


@dataclass
class Run:
    command: str
    config: RunConfig
    plots: bool = True
    checks: list[dict] = field(default_factory=list)
    results: dict = field(default_factory=dict)
    timings: list[tuple[str, float]] = field(default_factory=list)
    files: list[str] = field(default_factory=list)
    status: str = "ok"

    @property
    def out(self) -> Path:
        return self.config.out_dir

    def check(self, name: str, passed: bool, **info) -> None:
        self.checks.append({"name": name, "passed": bool(passed), **info})

    def timed(self, label: str, fn: Callable, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        finally:
            self.timings.append((label, time.perf_counter() - t0))

    def field_csv(self, f: ScalarField, name: str) -> None:
        write_field_csv(f, self.out / name)
        self.files.append(name)

    def rows_csv(self, name: str, header, rows) -> None:
        _write_rows(self.out / name, header, rows)
        self.files.append(name)

    def figure(self, fn_name: str, *args, **kwargs) -> None:
        if not self.plots:
            return
        from . import plotting

        path = self.out / "figures" / kwargs.pop("name")
        getattr(plotting, fn_name)(*args, path=path, **kwargs)
        self.files.append(str(path.relative_to(self.out)))

    def finish(self) -> None:
        eps = {c["name"]: c["eps_grid"] for c in self.checks if "eps_grid" in c}
        manifest = {
            "command": self.command,
            "status": self.status,
            "config": self.config.raw,
            "versions": {"mcflab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "python": platform.python_version()},
            "results": self.results,
            "checks": self.checks,
            "eps_grid": eps,
            "files": sorted(self.files),
        }
        _write_json(self.out / "run.json", manifest)
        _write_json(self.out / "checks.json", {"all_passed": all(c["passed"] for c in self.checks),
                                               "checks": self.checks})
        with (self.out / "timings.txt").open("w") as fh:
            for label, sec in self.timings:
                fh.write(f"{label}\t{sec:.3f}\n")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("MCFLAB_THREADS", "1")))
    except ValueError:
        return 1


def _ordered_map(fn: Callable, items: Sequence) -> list:
    """``map`` over at most ``MCFLAB_THREADS`` workers, results in input order."""
    n = min(_threads(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _tag(lam: float) -> str:
    return f"{lam:g}"


def _exact_u(domain: DomainSpec):
    """Exact arrival time for a round disk or ball, else ``None``."""
    if domain.kind != "disk":
        return None
    R, cx, cy = domain["radius"], domain["cx"], domain["cy"]

    def u(x0, x1):
        rho2 = (x0 - (0.0 if domain.n == 3 else cx)) ** 2 + (x1 - cy) ** 2
        return (R * R - rho2) / (2.0 * (domain.n - 1))

    return u


def _probe(cfg: RunConfig, grid: Grid, mask: np.ndarray) -> np.ndarray:
    d = cfg.diagnostics
    probe = probe_mask(cfg.domain, grid, mask, d["probe_fraction"])
    if d["probe_inner"] > 0:
        probe &= ~probe_mask(cfg.domain, grid, mask, d["probe_inner"])
    return probe


# ---------------------------------------------------------------------------
# commands


def cmd_validate(run: Run) -> None:
    cfg = run.config
    if cfg.domain is None:
        raise ConfigError("validate needs a [domain] block")
    report = validate_mean_convex(cfg.domain)
    run.results["mean_convex"] = report.to_dict()
    if cfg.domain.kind in ("lens", "square"):
        run.check("mean_convex", report.passed, margin=report.min_curvature,
                  corner_angles=report.corner_angles)
    else:
        run.check("mean_convex", report.passed, margin=report.min_curvature)
    if cfg.boundary is not None:
        spec = _motion_spec(cfg)
        hyp = validate_hypotheses(spec)
        run.results["hypotheses"] = hyp.to_dict()
        for key, (ok, detail) in sorted(hyp.results.items()):
            run.check(f"hypothesis_{key}", ok, detail=detail)
    grid = cfg.grid()
    mask = build_mask(cfg.domain, grid)
    run.results["grid"] = grid.to_dict()
    run.results["mask_counts"] = {"interior": int(mask.interior.sum()), "boundary": int(mask.boundary.sum())}


def _run_ladder(run: Run, keep_all: bool) -> LadderResult:
    cfg = run.config
    grid = cfg.grid()
    mask = build_mask(cfg.domain, grid)
    probe = _probe(cfg, grid, mask.mask)
    try:
        ladder = run.timed("ladder", lambda_ladder, cfg.domain, grid, cfg.schedule, tol=cfg.tol,
                           max_iter=cfg.max_iter, probe=probe)
    except LadderError as exc:
        run.status = "not converged"
        for sol in exc.completed if keep_all else exc.completed[-1:]:
            run.field_csv(sol.f, f"f_lambda_{_tag(sol.lam)}.csv")
            run.field_csv(u_lambda(sol), f"u_lambda_{_tag(sol.lam)}.csv")
        run.results["completed"] = [s.summary() for s in exc.completed]
        run.results["failure"] = str(exc)
        if isinstance(exc.cause, NonConvergenceError):
            c = exc.cause
            part = ScalarField(grid, c.lam * c.iterate.reshape(grid.shape), mask.mask)
            run.field_csv(part, f"f_lambda_{_tag(c.lam)}_partial.csv")
        raise
    for sol in ladder.solutions if keep_all else ladder.solutions[-1:]:
        run.field_csv(sol.f, f"f_lambda_{_tag(sol.lam)}.csv")
        run.field_csv(u_lambda(sol), f"u_lambda_{_tag(sol.lam)}.csv")
    run.results["members"] = ladder.summaries if keep_all else ladder.summaries[-1:]
    run.results["ladder_differences"] = ladder.differences
    for s in ladder.solutions:
        run.check(f"residual_lambda_{_tag(s.lam)}", s.residual <= cfg.tol + s.rounding, residual=s.residual,
                  tolerance=cfg.tol, rounding_allowance=s.rounding, iterations=s.iterations)
    exact = _exact_u(cfg.domain)
    if exact is not None:
        X = grid.coords()
        target = exact(*X)
        errs = [float(np.abs(u - target)[probe].max()) for u in (f.values for f in ladder.u_fields())]
        run.results["exact_errors"] = errs
        run.check("exact_error_monotone", all(b <= a for a, b in zip(errs, errs[1:])), errors=errs)
    return ladder


def _member_checks(run: Run, ladder: LadderResult) -> None:
    cfg = run.config
    d = cfg.diagnostics

    def one(sol):
        out = {"inequality": translator_inequality_check(sol, fraction=d["k_fraction"]),
               "gradient": gradient_bound_check(sol)}
        if d["uniqueness"]:
            out["uniqueness"] = uniqueness_check(sol, tol=cfg.tol, seed=d["seed"])
        return out

    reports = run.timed("member_checks", _ordered_map, one, ladder.solutions)
    for sol, rep in zip(ladder.solutions, reports):
        t = _tag(sol.lam)
        ineq = rep["inequality"]
        run.check(f"translator_inequality_lambda_{t}", ineq["passed"],
                  margin=ineq["interior_min"] - ineq["boundary_min"], eps_grid=ineq["eps_grid"],
                  interior_min=ineq["interior_min"], boundary_min=ineq["boundary_min"])
        for k, gb in enumerate(rep["gradient"]):
            run.check(f"gradient_bound_lambda_{t}_set_{k}", gb["passed"],
                      margin=gb["sup_boundary"] - gb["sup_K"], eps_grid=gb["eps_grid"])
        if "uniqueness" in rep:
            un = rep["uniqueness"]
            run.check(f"uniqueness_lambda_{t}", un["passed"], margin=un["bound"] - un["difference"],
                      difference=un["difference"], bound=un["bound"])


def cmd_solve(run: Run) -> None:
    ladder = _run_ladder(run, keep_all=False)
    final = type(ladder)(ladder.schedule[-1:], ladder.solutions[-1:], ladder.probe, [])
    _member_checks(run, final)
    u = u_lambda(ladder.solutions[-1])
    run.figure("plot_field", u, name="u_final.png", title=f"u at lambda = {_tag(ladder.schedule[-1])}", label="u")


def cmd_ladder(run: Run) -> None:
    ladder = _run_ladder(run, keep_all=True)
    _member_checks(run, ladder)
    fields = ladder.u_fields()
    run.figure("plot_ladder_profiles", fields, ladder.schedule, name="ladder_profiles.png",
               exact=_exact_u(run.config.domain))
    series = {"successive difference": ladder.differences}
    if "exact_errors" in run.results:
        series["error"] = run.results["exact_errors"]
    run.figure("plot_convergence", ladder.schedule, series, name="ladder_convergence.png")


def _lambda_from_name(path: str) -> float | None:
    m = re.search(r"lambda_([0-9.eE+-]+?)\.csv$", Path(path).name)
    return float(m.group(1)) if m else None


def _diagnose_fields(run: Run, paths: Sequence[str] | None) -> tuple[list[ScalarField], list[float]]:
    cfg = run.config
    if not paths:
        ladder = _run_ladder(run, keep_all=True)
        return ladder.u_fields(), ladder.schedule
    kind = cfg.domain.grid_kind if cfg.domain is not None else None
    fields = []
    for p in paths:
        try:
            fields.append(read_field_csv(p, kind=kind))
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read field {p}: {exc}") from exc
    lams = [_lambda_from_name(p) for p in paths]
    if any(x is None for x in lams):
        if len(cfg.schedule) < len(paths):
            raise ConfigError("field names carry no lambda and the schedule is too short")
        lams = cfg.schedule[-len(paths):]
    return fields, [float(x) for x in lams]


def cmd_diagnose(run: Run, field_paths: Sequence[str] | None, singular: bool) -> None:
    cfg = run.config
    d = cfg.diagnostics
    fields, lams = _diagnose_fields(run, field_paths)
    u = fields[-1]
    eps_reg = d["eps_reg"] if d["eps_reg"] is not None else regularity_threshold(u.grid)
    run.results["eps_reg"] = eps_reg
    table = run.timed("curvature_table", curvature_table, u, eps_reg)
    cols = ("axis0", "axis1", "kappa1", "kappa_last", "h", "ratio", "grad_norm", "regular")
    run.rows_csv("curvature.csv", cols, [[r[c] for c in cols] for r in table])

    diag = level_set_curvature_fields(u, eps_reg)
    regular = diag["regular"]
    if cfg.domain is not None:
        probe = _probe(cfg, u.grid, u.mask)
    else:
        probe = u.interior.copy()
    dropped = int((probe & ~regular).sum())
    probe &= regular
    if not probe.any():
        raise PreconditionError("no regular nodes in the probe set")
    res = arrival_residual(u, probe, eps_reg)
    run.check("arrival_residual", res <= d["residual_tol"], margin=d["residual_tol"] - res,
              residual=res, probe_nodes=int(probe.sum()), nonregular_dropped=dropped)
    ratios = diag["ratio"][probe]
    run.results["probe_ratio"] = {"min": float(ratios.min()), "max": float(ratios.max()),
                                  "median": float(np.median(ratios))}

    rng = np.random.default_rng(d["seed"])
    nodes = np.argwhere(probe)
    pick = nodes[rng.choice(len(nodes), size=min(d["lift_probes"], len(nodes)), replace=False)]
    defect = product_lift_check(u, [tuple(n) for n in pick], eps_reg)
    run.check("product_lift", defect == 0.0, defect=defect, probes=len(pick))

    vals = np.where(u.interior, u.values, -np.inf)
    K = vals >= d["k_fraction"] * vals.max()
    rb = ratio_bound_check(u, K, eps_reg)
    run.check("ratio_bound", rb.passed, margin=rb.margin, eps_grid=rb.eps_grid,
              interior_min=rb.interior_min, boundary_min=rb.boundary_min)
    run.figure("plot_field", u, name="ratio.png", values=diag["ratio"], keep=regular, cmap="coolwarm",
               label="kappa_1 / h", title="curvature ratio at regular nodes")

    if singular:
        report = run.timed("singular", detect_singular, u_fields=fields, lambdas=lams, eps_reg=eps_reg)
        report = classify_tangent(report, u)
        data = report.to_dict()
        _write_json(run.out / "singular.json", data)
        run.files.append("singular.json")
        run.results["singular"] = {"count": len(report.candidates), "classifications": report.classifications}
        for k, c in enumerate(report.candidates):
            floor = c.neighborhood_min_ratio
            run.check(f"singular_{k}_convex_type", floor is not None and floor >= report.star_floor,
                      margin=None if floor is None else floor - report.star_floor,
                      classification=c.classification)
        run.figure("plot_singular", u, data["candidates"], name="singular.png")


def _motion_spec(cfg: RunConfig) -> BoundaryMotionSpec:
    b = cfg.boundary
    if cfg.domain is None:
        raise ConfigError("boundary motion needs a [domain] block")
    try:
        return BoundaryMotionSpec(cfg.domain, b["samples"], b["limit"], b["horizon_scale"],
                                  b["horizon_power"], b["settle_tol"])
    except SpecificationError as exc:
        raise ConfigError(f"[boundary]: {exc}") from exc


def cmd_boundary(run: Run) -> None:
    cfg = run.config
    if cfg.boundary is None:
        raise ConfigError("the boundary command needs a [boundary] block")
    b = cfg.boundary
    spec = _motion_spec(cfg)
    hyp = validate_hypotheses(spec)
    run.results["hypotheses"] = hyp.to_dict()
    if b["validate"]:
        for key, (ok, detail) in sorted(hyp.results.items()):
            run.check(f"hypothesis_{key}", ok, detail=detail)
        if not hyp.passed:
            raise HypothesisError("hypotheses fail: " + ", ".join(hyp.failed()))
    grid = cfg.grid()
    try:
        flow = run.timed("boundary_flow", solve_boundary_flow, spec, grid, cfg.schedule, tol=cfg.tol,
                         max_iter=b["max_iter"], validate=False, reach_fraction=b["reach_fraction"])
    except LadderError as exc:
        run.status = "not converged"
        if exc.completed:
            run.field_csv(u_lambda(exc.completed[-1]), "u_boundary.csv")
        run.results["completed"] = [s.summary() for s in exc.completed]
        run.results["failure"] = str(exc)
        raise
    run.field_csv(flow.u, "u_boundary.csv")
    rows = flow.staircases[-1].rows()
    run.rows_csv("staircase.csv", ("piece", "s", "x0", "x1", "value", "certificate"),
                 [[r[k] for k in ("piece", "s", "x0", "x1", "value", "certificate")] for r in rows])
    run.results["flow"] = flow.summary()
    for s in flow.ladder.solutions:
        run.check(f"residual_lambda_{_tag(s.lam)}", s.residual <= cfg.tol + s.rounding, residual=s.residual,
                  tolerance=cfg.tol, rounding_allowance=s.rounding, iterations=s.iterations)
    diffs = flow.ladder.differences
    if len(diffs) >= 2 and all(math.isfinite(x) for x in diffs):
        run.check("ladder_differences_decreasing", all(y < x for x, y in zip(diffs, diffs[1:])),
                  differences=diffs)
    curve = limit_surface(spec, flow.u, flow.horizon, b["reach_fraction"])
    run.rows_csv("m_infinity.csv", ("x0", "x1"), [[r["x0"], r["x1"]] for r in curve.rows()])
    ends = spec.barrier_point([spec.limit[0], spec.barrier_length - spec.limit[1]])
    dist = curve.hausdorff_to_segment(ends[0], ends[1])
    run.results["limit_curve"] = {"points": len(curve.points), "straightness": curve.straightness,
                                  "hausdorff_to_chord": dist, "chord": ends}
    run.check("limit_curve_minimal", dist <= b["hausdorff_tol"], margin=b["hausdorff_tol"] - dist,
              hausdorff=dist, tolerance=b["hausdorff_tol"])
    run.figure("plot_boundary_flow", flow.u, flow.not_reached, curve.points, name="boundary_flow.png",
               chord=ends)
    run.figure("plot_staircase", rows, name="staircase.png")


def cmd_soliton(run: Run) -> None:
    so = run.config.soliton
    spec = grim_reaper(so["c"]) if so["family"] == "grim_reaper" else bowl(so["c"])
    study = run.timed("soliton_study", soliton_study, spec, so["sizes"], so["extent"], so["trials"], so["seed"])
    rows = profile_rows(spec, so["extent"], so["profile_samples"])
    run.rows_csv(f"{so['family']}_profile.csv", ("r", "phi", "phi_prime"), rows)
    _write_json(run.out / "soliton.json", study)
    run.files.append("soliton.json")
    run.results["soliton"] = study
    run.check("soliton_residual", study["residuals"][-1] <= 1e-4, margin=1e-4 - study["residuals"][-1],
              residuals=study["residuals"])
    run.check("soliton_order", min(study["orders"]) >= 1.8, margin=min(study["orders"]) - 1.8,
              orders=study["orders"])
    run.check("soliton_stationarity", study["stationarity"] <= 1e-5, margin=1e-5 - study["stationarity"],
              stationarity=study["stationarity"])
    run.figure("plot_profile", rows, name="profile.png", title=so["family"].replace("_", " "))


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mcflab", description="Mean-convex flows by elliptic regularization.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="TOML run configuration")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--grid-n", type=int, help="nodes across the first grid axis")
    p.add_argument("--lambda-max", type=float, help="drop schedule entries above this value")
    p.add_argument("--field", action="append", help="arrival-time CSV for diagnose (repeatable)")
    p.add_argument("--singular", action="store_true", help="diagnose: detect and classify singular points")
    p.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.out, args.grid_n, args.lambda_max)
    except ConfigError as exc:
        print(f"mcflab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    run = Run(args.command, cfg, plots=not args.no_plots)
    code = EXIT_OK
    try:
        if args.command == "validate":
            cmd_validate(run)
        elif args.command == "solve":
            cmd_solve(run)
        elif args.command == "ladder":
            cmd_ladder(run)
        elif args.command == "diagnose":
            cmd_diagnose(run, args.field, args.singular)
        elif args.command == "boundary":
            cmd_boundary(run)
        else:
            cmd_soliton(run)
    except (ConfigError, SpecificationError, ResolutionError, ParameterError) as exc:
        print(f"mcflab: configuration error: {exc}", file=sys.stderr)
        run.status = "configuration error"
        run.results["error"] = str(exc)
        code = EXIT_CONFIG
    except (LadderError, NonConvergenceError) as exc:
        print(f"mcflab: solver did not converge: {exc}", file=sys.stderr)
        run.status = "not converged"
        code = EXIT_NONCONVERGED
    except (PreconditionError, HypothesisError, DegenerateOutputError) as exc:
        print(f"mcflab: invariant violation: {exc}", file=sys.stderr)
        run.status = "invariant violation"
        run.results["error"] = str(exc)
        code = EXIT_INVARIANT
    if code == EXIT_OK and not all(c["passed"] for c in run.checks):
        failed = [c["name"] for c in run.checks if not c["passed"]]
        print(f"mcflab: invariant violation: {', '.join(failed)}", file=sys.stderr)
        run.status = "invariant violation"
        code = EXIT_INVARIANT
    run.finish()
    return code


if __name__ == "__main__":
    sys.exit(main())
