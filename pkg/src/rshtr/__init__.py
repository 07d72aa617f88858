"""Random subspace homogenized trust-region optimization toolkit."""

from .errors import (
    InvalidConfig,
    LineSearchExhausted,
    NumericalFailure,
    ParseError,
    RshtrError,
    SubproblemNotConverged,
)
from .operators import CheckReport, Objective, check_gradient, check_hvp
from .sketch import (
    IdentitySketch,
    Sketch,
    dump_sketch,
    load_sketch,
    restricted_hvp,
    sample_sketch,
)
from .subproblem import (
    BorderedOperator,
    HomoSolution,
    extract_direction,
    solve_leftmost_dense,
    solve_leftmost_lanczos,
)
from .solver import (
    RunResult,
    SolverConfig,
    TraceRecord,
    backtracking_line_search,
    default_params,
    run,
    step,
)
from .baselines import BaselineConfig, hsodm_config, run_baseline, run_hsodm

__version__ = "0.1.0"

__all__ = [
    "BaselineConfig",
    "BorderedOperator",
    "CheckReport",
    "HomoSolution",
    "IdentitySketch",
    "InvalidConfig",
    "LineSearchExhausted",
    "NumericalFailure",
    "Objective",
    "ParseError",
    "RshtrError",
    "RunResult",
    "Sketch",
    "SolverConfig",
    "SubproblemNotConverged",
    "TraceRecord",
    "backtracking_line_search",
    "check_gradient",
    "check_hvp",
    "default_params",
    "dump_sketch",
    "extract_direction",
    "hsodm_config",
    "load_sketch",
    "restricted_hvp",
    "run",
    "run_baseline",
    "run_hsodm",
    "sample_sketch",
    "solve_leftmost_dense",
    "solve_leftmost_lanczos",
    "step",
]
