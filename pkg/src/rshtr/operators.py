"""Uniform interface to objective functions.

An :class:`Objective` bundles a function value hook, a gradient hook and an
optional Hessian-vector product hook behind a single counted interface.
When no analytic Hessian-vector product is available, a central finite
difference of the gradient is used instead, so every objective exposes the
same three operations to the solvers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import NumericalFailure

_TINY = 1e-300


def _check_finite_scalar(value, what):
    if not np.isfinite(value):
        raise NumericalFailure(f"{what} returned non-finite value {value!r}", value=value)
    return float(value)


def _check_finite_vector(vec, what):
    if not np.all(np.isfinite(vec)):
        bad = int(np.flatnonzero(~np.isfinite(vec))[0])
        raise NumericalFailure(
            f"{what} returned non-finite entry at index {bad}: {vec[bad]!r}",
            index=bad,
            value=vec[bad],
        )
    return vec


class Objective:
    """Counted value/gradient/Hessian-vector-product interface.

    Hooks must be deterministic functions of their inputs and re-entrant:
    the solvers call them from a single logical thread per run, but a
    harness may drive many runs concurrently on separate instances.
    Evaluation counters are per-instance and only ever increase; reset them
    explicitly between trials with :meth:`reset_counters`.
    """

    def __init__(
        self,
        dim: int,
        f: Callable[[np.ndarray], float],
        grad: Callable[[np.ndarray], np.ndarray],
        hvp: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None,
        name: str = "",
    ):
        self.dim = int(dim)
        self.name = name
        self._f = f
        self._grad = grad
        self._hvp = hvp
        self.f_count = 0
        self.grad_count = 0
        self.hvp_count = 0

    def reset_counters(self) -> None:
        self.f_count = 0
        self.grad_count = 0
        self.hvp_count = 0

    def eval_f(self, x: np.ndarray) -> float:
        self.f_count += 1
        return _check_finite_scalar(self._f(x), f"f({self.name})")

    def eval_grad(self, x: np.ndarray) -> np.ndarray:
        self.grad_count += 1
        g = np.asarray(self._grad(x), dtype=np.float64)
        return _check_finite_vector(g, f"grad({self.name})")

    def eval_hvp(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Hessian-vector product, analytic when available, otherwise a
        central difference of the gradient."""
        self.hvp_count += 1
        vnorm = float(np.linalg.norm(v))
        if vnorm == 0.0:
            return np.zeros(self.dim)
        if self._hvp is not None:
            hv = np.asarray(self._hvp(x, v), dtype=np.float64)
        else:
            h = np.sqrt(np.finfo(np.float64).eps) * (1.0 + np.linalg.norm(x)) / max(vnorm, _TINY)
            self.grad_count += 2
            gp = np.asarray(self._grad(x + h * v), dtype=np.float64)
            gm = np.asarray(self._grad(x - h * v), dtype=np.float64)
            hv = (gp - gm) / (2.0 * h)
        return _check_finite_vector(hv, f"hvp({self.name})")


@dataclass
class CheckReport:
    """Outcome of a derivative consistency probe."""

    what: str
    max_rel_err: float
    tol: float
    passed: bool
    details: list

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        return f"[{status}] {self.what}: max rel err {self.max_rel_err:.3e} (tol {self.tol:.1e})"


def _fd_directional_derivative(obj: Objective, x, e, h):
    # Two raw f-hook calls; bypass counters so probes do not pollute cost accounting.
    return (obj._f(x + h * e) - obj._f(x - h * e)) / (2.0 * h)


def check_gradient(obj: Objective, x, tol: float = 1e-5, n_probes: int = 5, rng=None) -> CheckReport:
    """Compare the gradient hook against central finite differences of f
    along random unit directions. Report-only; never raises."""
    rng = np.random.default_rng(rng if rng is not None else 0)
    g = obj.eval_grad(x)
    scale = 1.0 + float(np.linalg.norm(x))
    h = 1e-6 * scale
    details = []
    max_rel = 0.0
    for _ in range(n_probes):
        e = rng.standard_normal(obj.dim)
        e /= np.linalg.norm(e)
        fd = _fd_directional_derivative(obj, x, e, h)
        an = float(g @ e)
        rel = abs(fd - an) / max(1.0, abs(fd), abs(an))
        max_rel = max(max_rel, rel)
        details.append((an, fd, rel))
    return CheckReport("gradient", max_rel, tol, max_rel <= tol, details)


def check_hvp(obj: Objective, x, v, tol: float = 1e-4) -> CheckReport:
    """Compare the Hessian-vector product hook against a central finite
    difference of the gradient along v. Report-only; never raises."""
    vnorm = float(np.linalg.norm(v))
    if vnorm == 0.0:
        return CheckReport("hvp", 0.0, tol, True, [])
    h = np.sqrt(np.finfo(np.float64).eps) * (1.0 + np.linalg.norm(x)) / vnorm
    obj.grad_count += 2
    fd = (np.asarray(obj._grad(x + h * v)) - np.asarray(obj._grad(x - h * v))) / (2.0 * h)
    an = obj.eval_hvp(x, v)
    rel = float(np.linalg.norm(fd - an) / max(1.0, np.linalg.norm(fd), np.linalg.norm(an)))
    return CheckReport("hvp", rel, tol, rel <= tol, [(np.linalg.norm(an), np.linalg.norm(fd), rel)])
