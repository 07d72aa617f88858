"""Benchmark harness: solver-by-problem-by-seed grids with CSV traces.

Configs are JSON with a versioned schema (see README). Every grid cell
(problem, solver, seed) writes exactly one trace CSV; an aggregate summary
holds mean and standard deviation of f across seeds on a common iteration
grid, and a per-run report carries final statistics plus local
convergence-order estimates. Reruns of the same config are bit-identical
except for the wall-clock column.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import baselines, problems, solver
from .datasets import load_dense_csv, load_libsvm
from .errors import InvalidConfig, RshtrError
from .solver import CSV_COLUMNS, PHASE_LOCAL, RunResult, SolverConfig, TraceRecord

SCHEMA_VERSION = 1
ERROR_FLOOR = 1e-13
WORKERS_ENV_VAR = "RSHTR_WORKERS"


# -- configuration -------------------------------------------------------------

@dataclass
class ProblemSpec:
    name: str
    kind: str
    params: dict = field(default_factory=dict)


@dataclass
class SolverSpec:
    name: str
    method: str  # rshtr | hsodm | gd | rsgd
    params: dict = field(default_factory=dict)


@dataclass
class BenchConfig:
    problems: List[ProblemSpec]
    solvers: List[SolverSpec]
    seeds: List[int]
    max_iter: int = 1000
    time_budget: Optional[float] = None
    output_dir: str = "bench_out"
    trace_cadence: int = 1
    version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.version != SCHEMA_VERSION:
            raise InvalidConfig(f"unsupported config version {self.version}")
        if self.trace_cadence < 1:
            raise InvalidConfig("trace_cadence must be >= 1")
        if not self.seeds:
            raise InvalidConfig("need at least one seed")
        names = [p.name for p in self.problems]
        if len(set(names)) != len(names):
            raise InvalidConfig("problem names must be unique")
        names = [s.name for s in self.solvers]
        if len(set(names)) != len(names):
            raise InvalidConfig("solver names must be unique")

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "problems": [asdict(p) for p in self.problems],
            "solvers": [asdict(s) for s in self.solvers],
            "seeds": list(self.seeds),
            "max_iter": self.max_iter,
            "time_budget": self.time_budget,
            "output_dir": self.output_dir,
            "trace_cadence": self.trace_cadence,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BenchConfig":
        try:
            return cls(
                problems=[ProblemSpec(**p) for p in data["problems"]],
                solvers=[SolverSpec(**s) for s in data["solvers"]],
                seeds=list(data["seeds"]),
                max_iter=data.get("max_iter", 1000),
                time_budget=data.get("time_budget"),
                output_dir=data.get("output_dir", "bench_out"),
                trace_cadence=data.get("trace_cadence", 1),
                version=data.get("version", SCHEMA_VERSION),
            )
        except (KeyError, TypeError) as err:
            raise InvalidConfig(f"malformed bench config: {err}") from err

    def to_file(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_file(cls, path) -> "BenchConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as err:
                raise InvalidConfig(f"config is not valid JSON: {err}") from err
        return cls.from_dict(data)


# -- problem and solver construction -------------------------------------------

def build_problem(spec: ProblemSpec):
    p = dict(spec.params)
    gen_seed = p.pop("gen_seed", 0)
    kind = spec.kind
    if kind == "quadratic":
        prob = problems.make_quadratic(gen_seed, n=p.pop("n"), cond=p.pop("cond", 100.0))
    elif kind == "rosenbrock":
        prob = problems.RosenbrockProblem(p.pop("n"))
    elif kind == "ler":
        prob = problems.make_ler(gen_seed, n=p.pop("n"), r=p.pop("r"))
    elif kind in ("mf", "mfm"):
        if "path" in p:
            _, R = load_dense_csv(p.pop("path"))
            mask = None
            if kind == "mfm":
                mask = np.isfinite(R).astype(np.float64)
                R = np.nan_to_num(R)
            prob = problems.MFProblem(R, k=p.pop("k"), mask=mask)
        else:
            prob = problems.make_mf(
                gen_seed, n_u=p.pop("n_u"), n_v=p.pop("n_v"), k=p.pop("k"),
                masked=(kind == "mfm"),
                mask_density=p.pop("mask_density", 0.5),
                noise=p.pop("noise", 0.0),
            )
    elif kind in ("logistic", "softmax"):
        if "path" in p:
            X, y = load_libsvm(
                p.pop("path"),
                feature_limit=p.pop("feature_limit", 10_000),
                sample_limit=p.pop("sample_limit", 1_000),
            )
            prob = problems.make_classification(
                X, y, task=kind, n_classes=p.pop("n_classes", None),
                feature_limit=None, sample_limit=None,
            )
        else:
            prob = problems.make_synthetic_classification(
                gen_seed, n_samples=p.pop("n_samples"), n_features=p.pop("n_features"),
                n_classes=p.pop("n_classes", 2), task=kind,
            )
    else:
        raise InvalidConfig(f"unknown problem kind {kind!r}")
    p.pop("x0_scale", None)
    if p:
        raise InvalidConfig(f"unused problem params for {spec.name}: {sorted(p)}")
    prob.name = spec.name
    return prob


def _start_point(prob, spec: ProblemSpec, seed: int):
    x0 = prob.default_start(seed)
    scale = spec.params.get("x0_scale")
    return x0 * scale if scale is not None else x0


def run_solver_on(prob, obj, spec: SolverSpec, seed: int, max_iter, time_budget,
                  x0, on_record=None, on_detail=None) -> RunResult:
    params = dict(spec.params)
    params.setdefault("max_iter", max_iter)
    if time_budget is not None:
        params.setdefault("time_budget", time_budget)
    if spec.method == "rshtr":
        cfg = SolverConfig(seed=seed, **params)
        return solver.run(obj, x0, cfg, on_record=on_record, on_detail=on_detail)
    if spec.method == "hsodm":
        cfg = baselines.hsodm_config(obj.dim, seed=seed, **params)
        return solver.run(obj, x0, cfg, on_record=on_record, on_detail=on_detail)
    if spec.method in ("gd", "rsgd"):
        cfg = baselines.BaselineConfig(method=spec.method, seed=seed, **params)
        return baselines.run_baseline(obj, x0, cfg, on_record=on_record)
    raise InvalidConfig(f"unknown solver method {spec.method!r}")


# -- trace CSV ------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return repr(float(value))


def record_to_row(record: TraceRecord) -> str:
    return ",".join(_fmt(getattr(record, col)) for col in CSV_COLUMNS)


def parse_trace_csv(path):
    """Read a trace CSV back into a list of TraceRecord."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header != CSV_COLUMNS:
            raise InvalidConfig(f"unexpected trace columns in {path}")
        for line in fh:
            parts = line.rstrip("\n").split(",")
            kwargs = {}
            for col, raw in zip(CSV_COLUMNS, parts):
                if col in ("k", "ls_iters", "hvp_count", "grad_count"):
                    kwargs[col] = int(raw)
                elif col in ("phase", "step_kind"):
                    kwargs[col] = raw
                elif col == "accepted":
                    kwargs[col] = raw == "true"
                else:
                    kwargs[col] = float(raw)
            records.append(TraceRecord(**kwargs))
    return records


# -- convergence order ----------------------------------------------------------

@dataclass
class OrderEstimate:
    q: float
    rho: float


def estimate_order(errors) -> Optional[OrderEstimate]:
    """Least-squares slope q of log e_{k+1} against log e_k, plus the
    geometric-mean contraction rho. Undefined (None) for fewer than six
    strictly positive points or a constant sequence."""
    e = np.asarray(errors, dtype=np.float64)
    if e.size < 6 or np.any(e <= 0.0) or not np.all(np.isfinite(e)):
        return None
    x = np.log(e[:-1])
    y = np.log(e[1:])
    var = np.var(x)
    if var == 0.0:
        return None
    q = float(np.cov(x, y, bias=True)[0, 1] / var)
    rho = float(np.exp(np.mean(y - x)))
    return OrderEstimate(q=q, rho=rho)


def local_error_window(errors, floor: float = ERROR_FLOOR):
    """Window used for order estimation: truncate the series at the first
    value below the floor (numerical noise), then keep the longest strictly
    decreasing suffix."""
    e = list(errors)
    cut = next((i for i, v in enumerate(e) if v < floor), len(e))
    e = e[:cut]
    if len(e) < 2:
        return e
    start = len(e) - 1
    while start > 0 and e[start - 1] > e[start]:
        start -= 1
    return e[start:]


def contraction_rate(errors, window: int = 50) -> Optional[float]:
    """Geometric mean of successive error ratios over the last ``window``
    steps."""
    e = np.asarray(errors, dtype=np.float64)
    e = e[np.isfinite(e) & (e > 0.0)]
    if e.size < 2:
        return None
    e = e[-(window + 1):]
    return float(np.exp(np.mean(np.log(e[1:] / e[:-1]))))


@dataclass
class ConvergenceReport:
    problem: str
    solver: str
    seed: int
    status: str
    final_f: Optional[float] = None
    final_gnorm: Optional[float] = None
    iterations: Optional[int] = None
    hvp_count: Optional[int] = None
    grad_count: Optional[int] = None
    stop_reason: Optional[str] = None
    order_q: Optional[float] = None
    rate_rho: Optional[float] = None
    trace_file: Optional[str] = None
    error: Optional[str] = None


def order_from_series(phases, errors):
    """(q, rho) from per-iteration error series, restricted to the local
    phase; q needs at least six strictly decreasing points."""
    local = [e for p, e in zip(phases, errors) if p == PHASE_LOCAL and np.isfinite(e)]
    if not local:
        return None, None
    rho = contraction_rate(local)
    window = local_error_window(local)
    est = estimate_order(window)
    return (est.q if est else None), rho


# -- grid execution ---------------------------------------------------------------

def _cell_filename(problem_name, solver_name, seed):
    return f"{problem_name}__{solver_name}__seed{seed}.csv"


def run_cell(cfg: BenchConfig, pspec: ProblemSpec, sspec: SolverSpec, seed: int,
             outdir: Path) -> ConvergenceReport:
    trace_file = _cell_filename(pspec.name, sspec.name, seed)
    try:
        prob = build_problem(pspec)
        obj = prob.objective()
        x0 = _start_point(prob, pspec, seed)
        xstar = prob.known_minimizer()
        phases, errors, f_series = [], [], []

        cadence = cfg.trace_cadence
        path = outdir / trace_file
        last_unwritten = [None]
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")

            def on_record(rec):
                phases.append(rec.phase)
                f_series.append(rec.f)
                if rec.k % cadence == 0:
                    fh.write(record_to_row(rec) + "\n")
                    last_unwritten[0] = None
                else:
                    last_unwritten[0] = rec

            on_detail = None
            if xstar is not None:
                def on_detail(det):
                    errors.append(float(np.linalg.norm(det.x_new - xstar)))

            result = run_solver_on(prob, obj, sspec, seed, cfg.max_iter,
                                   cfg.time_budget, x0,
                                   on_record=on_record, on_detail=on_detail)
            # Always keep the final iteration even under sparse cadence.
            if last_unwritten[0] is not None:
                fh.write(record_to_row(last_unwritten[0]) + "\n")

        if xstar is None:
            f_best = min(f_series) if f_series else 0.0
            errors = [e if (e := f - f_best) > 0 else float("nan") for f in f_series]
        q, rho = order_from_series(phases, errors)
        return ConvergenceReport(
            problem=pspec.name, solver=sspec.name, seed=seed, status="ok",
            final_f=result.f, final_gnorm=result.gnorm, iterations=result.iterations,
            hvp_count=obj.hvp_count, grad_count=obj.grad_count,
            stop_reason=result.stop_reason, order_q=q, rate_rho=rho,
            trace_file=trace_file,
        )
    except Exception as err:  # individual failures must not abort the grid
        return ConvergenceReport(
            problem=pspec.name, solver=sspec.name, seed=seed, status="failed",
            error=f"{type(err).__name__}: {err}", trace_file=trace_file,
        )


def _summary_rows(cfg: BenchConfig, reports, outdir: Path, grid_points: int = 200):
    rows = []
    for pspec in cfg.problems:
        for sspec in cfg.solvers:
            per_seed = []
            for rep in reports:
                if rep.problem == pspec.name and rep.solver == sspec.name and rep.status == "ok":
                    records = parse_trace_csv(outdir / rep.trace_file)
                    per_seed.append({rec.k: rec.f for rec in records})
            if not per_seed:
                continue
            common = set(per_seed[0])
            for d in per_seed[1:]:
                common &= set(d)
            ks = sorted(common)
            if len(ks) > grid_points:
                idx = np.linspace(0, len(ks) - 1, grid_points).astype(int)
                ks = [ks[i] for i in sorted(set(idx.tolist()))]
            for k in ks:
                vals = np.array([d[k] for d in per_seed])
                rows.append((pspec.name, sspec.name, k, float(vals.mean()),
                             float(vals.std()), len(vals)))
    return rows


def run_bench(cfg: BenchConfig, workers: Optional[int] = None, seed_offset: int = 0):
    """Execute the full grid; returns the list of per-run reports.

    Writes one trace CSV per cell plus ``summary.csv`` and ``report.json``
    into the output directory. Cells run concurrently up to the worker
    limit; each owns its RNG stream, objective and output file, so results
    do not depend on scheduling.
    """
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV_VAR, "1"))
    seeds = [s + seed_offset for s in cfg.seeds]

    cells = [
        (pspec, sspec, seed)
        for pspec in cfg.problems
        for sspec in cfg.solvers
        for seed in seeds
    ]
    if workers <= 1:
        reports = [run_cell(cfg, p, s, seed, outdir) for p, s, seed in cells]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_cell, cfg, p, s, seed, outdir) for p, s, seed in cells]
            reports = [f.result() for f in futures]  # deterministic join order

    with open(outdir / "report.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump([asdict(r) for r in reports], fh, indent=2)
        fh.write("\n")

    with open(outdir / "summary.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("problem,solver,k,f_mean,f_std,n_runs\n")
        for row in _summary_rows(cfg, reports, outdir):
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return reports


def aggregate_traces(directory):
    """Rebuild per-run reports from existing trace CSVs in a directory.

    The error metric falls back to f minus the best seen f since iterates
    are not stored in traces.
    """
    directory = Path(directory)
    reports = []
    for path in sorted(directory.glob("*__seed*.csv")):
        stem = path.stem
        try:
            problem_name, solver_name, seed_part = stem.split("__")
            seed = int(seed_part.removeprefix("seed"))
        except ValueError:
            continue
        records = parse_trace_csv(path)
        if not records:
            continue
        f_series = [r.f for r in records]
        f_best = min(f_series)
        errors = [f - f_best if f - f_best > 0 else float("nan") for f in f_series]
        q, rho = order_from_series([r.phase for r in records], errors)
        last = records[-1]
        reports.append(ConvergenceReport(
            problem=problem_name, solver=solver_name, seed=seed, status="ok",
            final_f=last.f, final_gnorm=last.gnorm, iterations=last.k + 1,
            hvp_count=last.hvp_count, grad_count=last.grad_count,
            order_q=q, rate_rho=rho, trace_file=path.name,
        ))
    return reports
