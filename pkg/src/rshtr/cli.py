"""Command line interface.

Subcommands:
  run     execute a benchmark grid from a JSON config
  check   run the built-in invariant battery
  report  aggregate existing trace CSVs into a report

Exit codes: 0 on success, 1 if any run or check failed, 2 on config errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import bench, problems
from .errors import InvalidConfig, RshtrError
from .operators import check_gradient, check_hvp
from .sketch import sample_sketch
from .solver import SolverConfig, run as run_solver
from .subproblem import BorderedOperator, solve_leftmost_dense, solve_leftmost_lanczos


def _cmd_run(args) -> int:
    try:
        cfg = bench.BenchConfig.from_file(args.config)
    except (InvalidConfig, OSError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    if args.output is not None:
        cfg.output_dir = args.output
    reports = bench.run_bench(cfg, workers=args.workers, seed_offset=args.seed_offset)
    failed = [r for r in reports if r.status != "ok"]
    for rep in reports:
        status = "ok " if rep.status == "ok" else "FAIL"
        extra = f"f={rep.final_f:.6g} gnorm={rep.final_gnorm:.3g}" if rep.status == "ok" else rep.error
        print(f"[{status}] {rep.problem} / {rep.solver} / seed {rep.seed}: {extra}")
    print(f"{len(reports) - len(failed)}/{len(reports)} runs ok -> {cfg.output_dir}")
    return 1 if failed else 0


def _check_line(name, ok, detail=""):
    print(f"[{'pass' if ok else 'FAIL'}] {name}{': ' + detail if detail else ''}")
    return ok


def _cmd_check(args) -> int:
    rng = np.random.default_rng(0)
    ok = True

    # Derivative consistency across the problem zoo.
    zoo = [
        problems.make_quadratic(0, n=30),
        problems.RosenbrockProblem(6),
        problems.make_ler(1, n=60, r=10),
        problems.make_mf(2, n_u=10, n_v=12, k=3),
        problems.make_mf(3, n_u=10, n_v=12, k=3, masked=True),
        problems.make_synthetic_classification(4, 40, 7, task="logistic"),
        problems.make_synthetic_classification(5, 40, 7, n_classes=4, task="softmax"),
    ]
    for prob in zoo:
        obj = prob.objective()
        worst_g = worst_h = 0.0
        for _ in range(3):
            x = rng.standard_normal(obj.dim) * 0.5
            v = rng.standard_normal(obj.dim)
            worst_g = max(worst_g, check_gradient(obj, x, rng=7).max_rel_err)
            worst_h = max(worst_h, check_hvp(obj, x, v).max_rel_err)
        ok &= _check_line(f"derivatives {prob.name}", worst_g <= 1e-5 and worst_h <= 1e-4,
                          f"grad {worst_g:.2e}, hvp {worst_h:.2e}")

    # Sketch determinism and adjoint identity.
    s1 = sample_sketch(7, 20, 50, 3)
    s2 = sample_sketch(7, 20, 50, 3)
    ok &= _check_line("sketch determinism", np.array_equal(s1.matrix, s2.matrix))
    x = rng.standard_normal(50)
    y = rng.standard_normal(20)
    lhs = s1.apply(x) @ y
    rhs = x @ s1.apply_transpose(y)
    ok &= _check_line("sketch adjoint identity", abs(lhs - rhs) <= 1e-12 * max(1, abs(lhs)))

    # Subproblem eigensolver against the dense oracle.
    worst = 0.0
    for i in range(10):
        g = rng.standard_normal(20)
        M = rng.standard_normal((20, 20))
        H = 0.5 * (M + M.T)
        op = BorderedOperator(g, 0.1, lambda u, H=H: H @ u)
        lz = solve_leftmost_lanczos(op, np.random.default_rng(i), tol=1e-10)
        dn = solve_leftmost_dense(H, g, 0.1)
        worst = max(worst, abs(lz.lambda_min - dn.lambda_min), abs(lz.theta - dn.theta))
    ok &= _check_line("subproblem oracle equivalence", worst <= 1e-8, f"max dev {worst:.2e}")

    # Short solver run: certificates on every iteration.
    prob = problems.make_quadratic(0, n=40, cond=10.0)
    obj = prob.objective()
    details = []
    cfg = SolverConfig(subspace_dim=10, epsilon=1e-2, max_iter=50, grad_tol=1e-8, seed=0)
    run_solver(obj, prob.default_start(0), cfg, on_detail=details.append)
    unit = all(abs(np.linalg.norm(np.append(d.solution.v_tilde, d.solution.t)) - 1) <= 1e-10
               for d in details)
    mult = all(d.solution.theta >= d.shift_used for d in details)
    ok &= _check_line("solver KKT certificates", unit and mult,
                      f"{len(details)} iterations checked")

    return 0 if ok else 1


def _cmd_report(args) -> int:
    directory = Path(args.directory)
    if not directory.is_dir():
        print(f"config error: {directory} is not a directory", file=sys.stderr)
        return 2
    reports = bench.aggregate_traces(directory)
    out = directory / "report.json"
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        json.dump([asdict(r) for r in reports], fh, indent=2)
        fh.write("\n")
    for rep in reports:
        print(f"{rep.problem} / {rep.solver} / seed {rep.seed}: "
              f"f={rep.final_f:.6g} gnorm={rep.final_gnorm:.3g} iters={rep.iterations}"
              + (f" q={rep.order_q:.2f}" if rep.order_q is not None else ""))
    print(f"{len(reports)} traces -> {out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="rshtr", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a benchmark grid")
    p_run.add_argument("config", help="path to JSON bench config")
    p_run.add_argument("--output", default=None, help="override output directory")
    p_run.add_argument("--workers", type=int, default=None,
                       help=f"worker threads (default 1, env {bench.WORKERS_ENV_VAR})")
    p_run.add_argument("--seed-offset", type=int, default=0)

    sub.add_parser("check", help="run the built-in invariant battery")

    p_rep = sub.add_parser("report", help="aggregate existing traces")
    p_rep.add_argument("directory", help="directory containing trace CSVs")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "check":
            return _cmd_check(args)
        return _cmd_report(args)
    except InvalidConfig as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except RshtrError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
