"""Outer iteration of the random subspace homogenized trust-region solver.

Each iteration samples a fresh Gaussian sketch, solves the bordered
eigenproblem in the subspace, and extracts an ambient step. The run starts
in a global phase with a fixed step radius (or an optional cubic-decrease
backtracking line search) and a positive homogenization shift; once the
step length drops to the radius the solver either terminates or resets the
shift to zero and switches to a local phase of full steps.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np

from .errors import InvalidConfig, LineSearchExhausted, SubproblemNotConverged
from .operators import Objective
from .sketch import restricted_hvp, sample_sketch_from, stream_generator
from .subproblem import (
    BorderedOperator,
    HomoSolution,
    extract_direction,
    materialize_restricted_hessian,
    solve_leftmost_dense,
    solve_leftmost_lanczos,
)

logger = logging.getLogger(__name__)

PHASE_GLOBAL = "Global"
PHASE_LOCAL = "Local"

STOP_GRAD_TOL = "grad_tol"
STOP_SMALL_STEP = "small_step"
STOP_BUDGET = "budget"
STOP_TIME_BUDGET = "time_budget"

RADIUS_LIMIT = 1.0 / (2.0 * np.sqrt(2.0))


def default_params(
    epsilon: float,
    hessian_lipschitz: float,
    dim: int,
    subspace_dim: int,
    isometry_constant: float = 1.0,
    force: bool = False,
):
    """Shift and step radius from the target accuracy.

    shift = (sqrt(n/s) + c)^2 sqrt(eps), radius = sqrt(eps) / M, with the
    radius clamped to 1/(2 sqrt 2). The accuracy must satisfy
    0 < eps <= M^2/8 unless ``force`` is set.
    """
    M = hessian_lipschitz
    if subspace_dim > dim:
        raise InvalidConfig(f"subspace dim {subspace_dim} exceeds problem dim {dim}")
    if not force and not (0.0 < epsilon <= M * M / 8.0 * (1.0 + 1e-12)):
        raise InvalidConfig(
            f"epsilon={epsilon} outside (0, M^2/8]={M * M / 8.0}; pass force=True to override"
        )
    shift = (np.sqrt(dim / subspace_dim) + isometry_constant) ** 2 * np.sqrt(epsilon)
    radius = np.sqrt(epsilon) / M
    if radius > RADIUS_LIMIT * (1.0 + 1e-9):
        warnings.warn(
            f"step radius {radius:.4g} exceeds {RADIUS_LIMIT:.4g}; clamping", stacklevel=2
        )
    radius = min(radius, RADIUS_LIMIT)
    return float(shift), float(radius)


@dataclass
class SolverConfig:
    """Knobs of a single solver run.

    ``shift`` and ``radius`` are derived from (epsilon, hessian_lipschitz,
    isometry_constant) when left as None. ``t_threshold=0`` selects the
    strict nonzero-t direction rule; a value in (0, 1/2) selects the
    thresholded variant. ``sketch_factory`` may inject a custom sketch per
    iteration (callable of seed, s, n, k); the default samples a fresh
    Gaussian sketch.
    """

    subspace_dim: int
    epsilon: float = 1e-2
    hessian_lipschitz: float = 1.0
    isometry_constant: float = 1.0
    shift: Optional[float] = None
    radius: Optional[float] = None
    t_threshold: float = 0.0
    step_mode: str = "fixed_radius"  # or "line_search"
    ls_gamma: float = 1e-3
    ls_beta: float = 0.5
    max_ls_iters: int = 60
    accept_mode: str = "always"  # or "monotone"
    on_small_step: str = "enter_local"  # or "terminate"
    grad_tol: float = 1e-8
    max_iter: int = 1000
    time_budget: Optional[float] = None
    seed: int = 0
    subsolver: str = "lanczos"  # or "dense"
    subsolver_tol: float = 1e-10
    subsolver_max_sweeps: int = 3
    dense_fallback_threshold: int = 512
    force_epsilon: bool = False
    sketch_factory: Optional[Callable] = None

    def __post_init__(self):
        if self.subspace_dim < 1:
            raise InvalidConfig("subspace_dim must be >= 1")
        if not 0.0 <= self.t_threshold < 0.5:
            raise InvalidConfig("t_threshold must lie in [0, 0.5)")
        if self.step_mode not in ("fixed_radius", "line_search"):
            raise InvalidConfig(f"unknown step_mode {self.step_mode!r}")
        if self.accept_mode not in ("always", "monotone"):
            raise InvalidConfig(f"unknown accept_mode {self.accept_mode!r}")
        if self.on_small_step not in ("enter_local", "terminate"):
            raise InvalidConfig(f"unknown on_small_step {self.on_small_step!r}")
        if self.subsolver not in ("lanczos", "dense"):
            raise InvalidConfig(f"unknown subsolver {self.subsolver!r}")
        if self.ls_gamma <= 0.0:
            raise InvalidConfig("ls_gamma must be positive")
        if not 0.0 < self.ls_beta < 1.0:
            raise InvalidConfig("ls_beta must lie in (0, 1)")
        if self.max_iter < 0:
            raise InvalidConfig("max_iter must be >= 0")
        if self.shift is not None and self.shift < 0.0:
            raise InvalidConfig("shift must be >= 0")
        if self.radius is not None and self.radius <= 0.0:
            raise InvalidConfig("radius must be positive")

    def resolve(self, dim: int):
        """Effective (shift, radius) for a problem of dimension ``dim``."""
        if self.shift is not None and self.radius is not None:
            return float(self.shift), float(self.radius)
        shift, radius = default_params(
            self.epsilon,
            self.hessian_lipschitz,
            dim,
            self.subspace_dim,
            self.isometry_constant,
            force=self.force_epsilon,
        )
        return (
            float(self.shift) if self.shift is not None else shift,
            float(self.radius) if self.radius is not None else radius,
        )


@dataclass
class IterateState:
    """Mutable-by-replacement loop state; the rng cursor is the iteration
    counter k (sketch and eigensolver draws are keyed by seed and k)."""

    k: int
    x: np.ndarray
    f_x: float
    g: np.ndarray
    phase: str
    started_at: float


@dataclass
class TraceRecord:
    """Per-iteration telemetry; f and gnorm describe the post-step iterate."""

    k: int
    phase: str
    f: float
    gnorm: float
    dnorm: float
    theta: float
    t: float
    lambda_min: float
    step_kind: str
    eta: float
    accepted: bool
    ls_iters: int
    hvp_count: int
    grad_count: int
    wall_ms: float


CSV_COLUMNS = [
    "k", "phase", "f", "gnorm", "dnorm", "theta", "t", "lambda_min",
    "step_kind", "eta", "accepted", "ls_iters", "hvp_count", "grad_count",
    "wall_ms",
]


@dataclass
class StepDetail:
    """Rich per-iteration diagnostics for invariant suites (not part of the
    CSV trace)."""

    k: int
    phase: str
    x_prev: np.ndarray
    x_new: np.ndarray
    f_prev: float
    f_new: float
    sketch: object
    g_tilde: np.ndarray
    shift_used: float
    solution: HomoSolution
    direction: np.ndarray
    eta: float
    accepted: bool
    ls_exhausted: bool
    used_dense_fallback: bool


@dataclass
class RunResult:
    x: np.ndarray
    f: float
    gnorm: float
    iterations: int
    stop_reason: str
    trace: List[TraceRecord]
    f_initial: float
    dense_fallbacks: int = 0


def backtracking_line_search(
    obj: Objective,
    x: np.ndarray,
    d: np.ndarray,
    gamma: float,
    beta: float,
    max_ls_iters: int = 60,
    f0: Optional[float] = None,
):
    """Backtrack from eta=1 until the cubic sufficient-decrease test
    f(x + eta d) - f(x) <= -(gamma/6) eta^3 ||d||^3 holds.

    Returns (eta, number of rejected trials). Raises LineSearchExhausted
    with the last tried eta once max_ls_iters backtracks all fail.
    """
    if gamma <= 0.0:
        raise InvalidConfig("gamma must be positive")
    if not 0.0 < beta < 1.0:
        raise InvalidConfig("beta must lie in (0, 1)")
    dnorm3 = float(np.linalg.norm(d)) ** 3
    if dnorm3 == 0.0:
        raise InvalidConfig("line search requires a nonzero direction")
    if f0 is None:
        f0 = obj.eval_f(x)
    eta = 1.0
    for j in range(max_ls_iters + 1):
        if obj.eval_f(x + eta * d) - f0 <= -(gamma / 6.0) * eta**3 * dnorm3:
            return eta, j
        eta *= beta
    raise LineSearchExhausted(
        f"no acceptable step after {max_ls_iters} backtracks",
        eta_last=eta / beta,
        ls_iters=max_ls_iters,
    )


def _solve_subproblem(obj, x, sketch, g_tilde, shift, cfg, rng):
    """Subproblem solve with optional dense fallback; returns
    (solution, used_fallback)."""

    def hvp_r(u):
        return restricted_hvp(obj, x, sketch, u)

    if cfg.subsolver == "dense":
        H = materialize_restricted_hessian(hvp_r, sketch.s)
        return solve_leftmost_dense(H, g_tilde, shift), False
    op = BorderedOperator(g_tilde, shift, hvp_r)
    try:
        sol = solve_leftmost_lanczos(op, rng, cfg.subsolver_tol, cfg.subsolver_max_sweeps)
        return sol, False
    except SubproblemNotConverged:
        if sketch.s > cfg.dense_fallback_threshold:
            raise
        logger.warning(
            "subproblem eigensolver did not certify at k: falling back to dense (s=%d)",
            sketch.s,
        )
        H = materialize_restricted_hessian(hvp_r, sketch.s)
        return solve_leftmost_dense(H, g_tilde, shift), True


def initial_state(obj: Objective, x0: np.ndarray) -> IterateState:
    x = np.array(x0, dtype=np.float64)
    if x.shape != (obj.dim,) or not np.all(np.isfinite(x)):
        raise InvalidConfig("x0 must be a finite vector of the problem dimension")
    f_x = obj.eval_f(x)
    g = obj.eval_grad(x)
    return IterateState(k=0, x=x, f_x=f_x, g=g, phase=PHASE_GLOBAL, started_at=time.monotonic())


def step(obj: Objective, state: IterateState, cfg: SolverConfig):
    """One outer iteration.

    Returns (new state, trace record, step detail). Phase transitions and
    stopping are the caller's business; the record carries everything the
    stopping rules need.
    """
    n = obj.dim
    shift_cfg, radius = cfg.resolve(n)
    shift = shift_cfg if state.phase == PHASE_GLOBAL else 0.0

    rng = stream_generator(cfg.seed, state.k)
    if cfg.sketch_factory is not None:
        sketch = cfg.sketch_factory(cfg.seed, cfg.subspace_dim, n, state.k)
    else:
        sketch = sample_sketch_from(rng, cfg.subspace_dim, n, seed=cfg.seed, draw_index=state.k)

    g_tilde = sketch.apply(state.g)
    sol, used_fallback = _solve_subproblem(obj, state.x, sketch, g_tilde, shift, cfg, rng)
    d, step_kind = extract_direction(sol, sketch, nu=cfg.t_threshold)
    dnorm = float(np.linalg.norm(d))

    eta = 1.0
    ls_iters = 0
    ls_exhausted = False
    next_phase = state.phase

    if state.phase == PHASE_GLOBAL and dnorm > radius:
        if cfg.step_mode == "fixed_radius":
            eta = radius / dnorm
        else:
            try:
                eta, ls_iters = backtracking_line_search(
                    obj, state.x, d, cfg.ls_gamma, cfg.ls_beta, cfg.max_ls_iters, f0=state.f_x
                )
            except LineSearchExhausted as err:
                eta = err.eta_last
                ls_iters = err.ls_iters
                ls_exhausted = True
        x_cand = state.x + eta * d
    else:
        # Small step or local phase: take the full direction.
        x_cand = state.x + d
        if state.phase == PHASE_GLOBAL and cfg.on_small_step == "enter_local":
            next_phase = PHASE_LOCAL

    f_cand = obj.eval_f(x_cand)
    accepted = True
    if cfg.accept_mode == "monotone" and not (f_cand < state.f_x):
        accepted = False
    if accepted:
        x_new, f_new = x_cand, f_cand
        g_new = obj.eval_grad(x_new)
    else:
        x_new, f_new, g_new = state.x, state.f_x, state.g

    wall_ms = (time.monotonic() - state.started_at) * 1000.0
    record = TraceRecord(
        k=state.k,
        phase=state.phase,
        f=f_new,
        gnorm=float(np.linalg.norm(g_new)),
        dnorm=dnorm,
        theta=sol.theta,
        t=sol.t,
        lambda_min=sol.lambda_min,
        step_kind=step_kind,
        eta=eta,
        accepted=accepted,
        ls_iters=ls_iters,
        hvp_count=obj.hvp_count,
        grad_count=obj.grad_count,
        wall_ms=wall_ms,
    )
    detail = StepDetail(
        k=state.k,
        phase=state.phase,
        x_prev=state.x,
        x_new=x_new,
        f_prev=state.f_x,
        f_new=f_new,
        sketch=sketch,
        g_tilde=g_tilde,
        shift_used=shift,
        solution=sol,
        direction=d,
        eta=eta,
        accepted=accepted,
        ls_exhausted=ls_exhausted,
        used_dense_fallback=used_fallback,
    )
    new_state = IterateState(
        k=state.k + 1,
        x=x_new,
        f_x=f_new,
        g=g_new,
        phase=next_phase,
        started_at=state.started_at,
    )
    return new_state, record, detail


def run(
    obj: Objective,
    x0: np.ndarray,
    cfg: SolverConfig,
    on_record: Optional[Callable[[TraceRecord], None]] = None,
    on_detail: Optional[Callable[[StepDetail], None]] = None,
) -> RunResult:
    """Iterate :func:`step` until a stopping rule fires.

    Stops on global-phase termination at small steps (when configured), on
    the gradient tolerance in the local phase, or on the iteration / wall
    clock budget. The trace holds one record per iteration and is streamed
    through ``on_record`` as it is produced.
    """
    if cfg.subspace_dim > obj.dim:
        raise InvalidConfig(
            f"subspace_dim {cfg.subspace_dim} exceeds problem dimension {obj.dim}"
        )
    _, radius = cfg.resolve(obj.dim)
    state = initial_state(obj, x0)
    f_initial = state.f_x
    trace: List[TraceRecord] = []
    dense_fallbacks = 0
    stop_reason = None

    while True:
        if state.k >= cfg.max_iter:
            stop_reason = STOP_BUDGET
            break
        if cfg.time_budget is not None and time.monotonic() - state.started_at > cfg.time_budget:
            stop_reason = STOP_TIME_BUDGET
            break
        if state.phase == PHASE_LOCAL and np.linalg.norm(state.g) <= cfg.grad_tol:
            stop_reason = STOP_GRAD_TOL
            break

        was_global = state.phase == PHASE_GLOBAL
        state, record, detail = step(obj, state, cfg)
        trace.append(record)
        dense_fallbacks += int(detail.used_dense_fallback)
        if on_record is not None:
            on_record(record)
        if on_detail is not None:
            on_detail(detail)

        small_step = record.dnorm <= radius
        if was_global and small_step and cfg.on_small_step == "terminate":
            stop_reason = STOP_SMALL_STEP
            break

    return RunResult(
        x=state.x,
        f=state.f_x,
        gnorm=float(np.linalg.norm(state.g)),
        iterations=state.k,
        stop_reason=stop_reason,
        trace=trace,
        f_initial=f_initial,
        dense_fallbacks=dense_fallbacks,
    )
