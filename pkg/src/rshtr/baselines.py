"""Comparison solvers sharing the objective, sketch and trace interfaces.

* full-space homogenized second-order descent (the un-sketched ancestor of
  the subspace solver, run through the same core with an identity
  embedding),
* gradient descent with Armijo backtracking,
* random subspace gradient descent (d = -P^T P g) with Armijo backtracking.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidConfig, LineSearchExhausted
from .operators import Objective
from .sketch import IdentitySketch, sample_sketch_from, stream_generator
from . import solver as _solver
from .solver import (
    IterateState,
    PHASE_GLOBAL,
    RunResult,
    SolverConfig,
    STOP_BUDGET,
    STOP_GRAD_TOL,
    STOP_TIME_BUDGET,
    TraceRecord,
    initial_state,
)

STEP_GRADIENT = "Gradient"
STEP_SKETCHED_GRADIENT = "SketchedGradient"


def hsodm_config(
    dim: int,
    shift: float = 1e-3,
    radius: float = 1e-3,
    t_threshold: float = 0.1,
    **kwargs,
) -> SolverConfig:
    """Solver configuration for the full-space method: same protocol with
    s = n and the ambient Hessian-vector product used directly."""
    return SolverConfig(
        subspace_dim=dim,
        shift=shift,
        radius=radius,
        t_threshold=t_threshold,
        sketch_factory=lambda seed, s, n, k: IdentitySketch(n),
        **kwargs,
    )


def hsodm_step(obj: Objective, state: IterateState, cfg: SolverConfig):
    """One full-space iteration; ``cfg`` should come from :func:`hsodm_config`."""
    return _solver.step(obj, state, cfg)


def run_hsodm(obj: Objective, x0, cfg: SolverConfig, **run_kwargs) -> RunResult:
    return _solver.run(obj, x0, cfg, **run_kwargs)


@dataclass
class BaselineConfig:
    """First-order baseline knobs; budget semantics match SolverConfig."""

    method: str = "gd"  # or "rsgd"
    subspace_dim: int = 100  # rsgd only
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    max_ls_iters: int = 60
    grad_tol: float = 1e-8
    max_iter: int = 1000
    time_budget: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("gd", "rsgd"):
            raise InvalidConfig(f"unknown baseline method {self.method!r}")
        if not 0.0 < self.backtrack_factor < 1.0:
            raise InvalidConfig("backtrack_factor must lie in (0, 1)")
        if self.armijo_c <= 0.0:
            raise InvalidConfig("armijo_c must be positive")


def armijo_line_search(obj, x, d, slope, c, beta, max_ls_iters, f0):
    """Classical Armijo backtracking on the linear model."""
    eta = 1.0
    for j in range(max_ls_iters + 1):
        if obj.eval_f(x + eta * d) <= f0 + c * eta * slope:
            return eta, j
        eta *= beta
    raise LineSearchExhausted(
        f"Armijo found no acceptable step after {max_ls_iters} backtracks",
        eta_last=eta / beta,
        ls_iters=max_ls_iters,
    )


def _first_order_step(obj, state, cfg, d, step_kind):
    dnorm = float(np.linalg.norm(d))
    slope = float(state.g @ d)
    eta = 0.0
    ls_iters = 0
    accepted = True
    if dnorm == 0.0:
        x_new, f_new, g_new = state.x, state.f_x, state.g
    else:
        try:
            eta, ls_iters = armijo_line_search(
                obj, state.x, d, slope, cfg.armijo_c, cfg.backtrack_factor,
                cfg.max_ls_iters, state.f_x,
            )
            x_new = state.x + eta * d
            f_new = obj.eval_f(x_new)
            g_new = obj.eval_grad(x_new)
        except LineSearchExhausted as err:
            eta = err.eta_last
            ls_iters = err.ls_iters
            accepted = False
            x_new, f_new, g_new = state.x, state.f_x, state.g

    record = TraceRecord(
        k=state.k,
        phase=PHASE_GLOBAL,
        f=f_new,
        gnorm=float(np.linalg.norm(g_new)),
        dnorm=dnorm,
        theta=float("nan"),
        t=float("nan"),
        lambda_min=float("nan"),
        step_kind=step_kind,
        eta=eta,
        accepted=accepted,
        ls_iters=ls_iters,
        hvp_count=obj.hvp_count,
        grad_count=obj.grad_count,
        wall_ms=(time.monotonic() - state.started_at) * 1000.0,
    )
    new_state = IterateState(
        k=state.k + 1, x=x_new, f_x=f_new, g=g_new,
        phase=PHASE_GLOBAL, started_at=state.started_at,
    )
    return new_state, record


def gd_step(obj: Objective, state: IterateState, cfg: BaselineConfig):
    """Steepest descent with Armijo backtracking."""
    return _first_order_step(obj, state, cfg, -state.g, STEP_GRADIENT)


def rsgd_step(obj: Objective, state: IterateState, cfg: BaselineConfig):
    """Sketched gradient step d = -P^T P g with Armijo backtracking.

    P^T P g is an unbiased surrogate of the gradient, and the direction is
    never ascent: g . d = -||P g||^2 <= 0.
    """
    rng = stream_generator(cfg.seed, state.k)
    sketch = sample_sketch_from(rng, cfg.subspace_dim, obj.dim,
                                seed=cfg.seed, draw_index=state.k)
    d = -sketch.apply_transpose(sketch.apply(state.g))
    return _first_order_step(obj, state, cfg, d, STEP_SKETCHED_GRADIENT)


def run_baseline(obj: Objective, x0, cfg: BaselineConfig, on_record=None) -> RunResult:
    """Iterate a first-order baseline until gradient tolerance or budget."""
    if cfg.method == "rsgd" and cfg.subspace_dim > obj.dim:
        raise InvalidConfig("subspace_dim exceeds problem dimension")
    step_fn = gd_step if cfg.method == "gd" else rsgd_step
    state = initial_state(obj, x0)
    f_initial = state.f_x
    trace = []
    stop_reason = None
    while True:
        if state.k >= cfg.max_iter:
            stop_reason = STOP_BUDGET
            break
        if cfg.time_budget is not None and time.monotonic() - state.started_at > cfg.time_budget:
            stop_reason = STOP_TIME_BUDGET
            break
        if np.linalg.norm(state.g) <= cfg.grad_tol:
            stop_reason = STOP_GRAD_TOL
            break
        state, record = step_fn(obj, state, cfg)
        trace.append(record)
        if on_record is not None:
            on_record(record)
    return RunResult(
        x=state.x,
        f=state.f_x,
        gnorm=float(np.linalg.norm(state.g)),
        iterations=state.k,
        stop_reason=stop_reason,
        trace=trace,
        f_initial=f_initial,
    )
