"""Homogenized trust-region subproblem.

The step computation reduces to the leftmost eigenpair of the symmetric
bordered operator

    F = [[H~, g~], [g~^T, -shift]]

acting on vectors [u; tau] of length s+1, where H~ is the restricted
Hessian applied matrix-free. The leftmost eigenvector [v~; t] yields the
descent direction, and the multiplier theta = max(0, -lambda_min) together
with the eigen-residual certify the KKT conditions of the ball-constrained
quadratic form minimization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import InvalidConfig, SubproblemNotConverged

# |t| below this is treated as a vanishing homogenization variable; far
# below any threshold parameter of interest (those live in (0, 1/2)).
T_TOL = 1e-12

STEP_HOMOGENEOUS = "Homogeneous"
STEP_NEGATIVE_CURVATURE = "NegativeCurvature"


@dataclass
class BorderedOperator:
    """Matrix-free action of the (s+1)-dimensional bordered matrix."""

    g_tilde: np.ndarray
    shift: float
    hvp_restricted: Callable[[np.ndarray], np.ndarray]

    @property
    def s(self) -> int:
        return self.g_tilde.shape[0]

    @property
    def dim(self) -> int:
        return self.s + 1

    def apply(self, w: np.ndarray) -> np.ndarray:
        u, tau = w[:-1], w[-1]
        out = np.empty(self.dim)
        out[:-1] = self.hvp_restricted(u) + tau * self.g_tilde
        out[-1] = self.g_tilde @ u - self.shift * tau
        return out


@dataclass
class HomoSolution:
    """Certified leftmost eigenpair of the bordered operator.

    The eigenvector [v_tilde; t] is unit norm with t >= 0 (when t is
    numerically zero the sign is fixed so that g~ . v~ <= 0). ``gv`` stores
    g~ . v~ so direction extraction never needs the gradient again.
    """

    lambda_min: float
    v_tilde: np.ndarray
    t: float
    theta: float
    residual: float
    hvp_count: int
    gv: float = 0.0


def _finalize(lam, w, g_tilde, shift, residual, hvp_count) -> HomoSolution:
    w = w / np.linalg.norm(w)
    t = w[-1]
    if abs(t) > T_TOL:
        if t < 0.0:
            w = -w
    elif g_tilde @ w[:-1] > 0.0:
        w = -w
    theta = max(0.0, -lam)
    # Optimality forces theta >= shift; an undershoot can only be
    # eigensolver noise, so clamp rather than propagate it to the trace.
    if theta < shift:
        theta = shift
    return HomoSolution(
        lambda_min=float(lam),
        v_tilde=w[:-1],
        t=float(w[-1]),
        theta=float(theta),
        residual=float(residual),
        hvp_count=hvp_count,
        gv=float(g_tilde @ w[:-1]),
    )


def _leftmost_of_tridiag(diag, offdiag):
    if diag.shape[0] == 1:
        return float(diag[0]), np.ones(1)
    vals, vecs = eigh_tridiagonal(diag, offdiag, select="i", select_range=(0, 0))
    return float(vals[0]), vecs[:, 0]


def solve_leftmost_lanczos(
    op: BorderedOperator,
    rng: np.random.Generator,
    tol: float = 1e-10,
    max_sweeps: int = 3,
) -> HomoSolution:
    """Leftmost eigenpair by Lanczos with full reorthogonalization.

    Each sweep starts from a fresh random unit vector and runs at most
    ``op.dim`` operator applications, which makes the tridiagonalization
    exact in exact arithmetic; for dimensions above 64 a cheap Ritz
    residual estimate allows early exit. Sweeps restart until the
    certified residual drops below ``tol * max(1, |lambda|)``.
    """
    if tol <= 0:
        raise InvalidConfig("tol must be positive")
    dim = op.dim
    applies = 0
    best = None  # (residual, lam, w)

    for _ in range(max_sweeps):
        q = rng.standard_normal(dim)
        q /= np.linalg.norm(q)
        Q = np.empty((dim, dim))
        Q[:, 0] = q
        alphas = np.empty(dim)
        betas = np.empty(dim)
        n_steps = 0
        for j in range(dim):
            w = op.apply(Q[:, j])
            applies += 1
            alphas[j] = Q[:, j] @ w
            w -= alphas[j] * Q[:, j]
            if j > 0:
                w -= betas[j - 1] * Q[:, j - 1]
            Qj = Q[:, : j + 1]
            w -= Qj @ (Qj.T @ w)
            w -= Qj @ (Qj.T @ w)
            b = float(np.linalg.norm(w))
            betas[j] = b
            n_steps = j + 1
            scale = max(1.0, np.max(np.abs(alphas[: j + 1])))
            if b <= dim * np.finfo(np.float64).eps * scale:
                break  # invariant subspace: Ritz pairs are exact
            if j + 1 < dim:
                Q[:, j + 1] = w / b
            if dim > 64 and j + 1 >= 16 and (j + 1) % 8 == 0:
                lam_j, y_j = _leftmost_of_tridiag(alphas[: j + 1], betas[:j])
                if b * abs(y_j[-1]) <= tol * max(1.0, abs(lam_j)):
                    break

        lam, y = _leftmost_of_tridiag(alphas[:n_steps], betas[: n_steps - 1])
        residual = betas[n_steps - 1] * abs(y[-1])
        wvec = Q[:, :n_steps] @ y
        wvec /= np.linalg.norm(wvec)
        if best is None or residual < best[0]:
            best = (residual, lam, wvec)
        if residual <= tol * max(1.0, abs(lam)):
            return _finalize(lam, wvec, op.g_tilde, op.shift, residual, applies)

    raise SubproblemNotConverged(
        f"Lanczos residual {best[0]:.3e} above tolerance after {max_sweeps} sweeps",
        best_residual=best[0],
    )


def solve_leftmost_dense(H_tilde: np.ndarray, g_tilde: np.ndarray, shift: float) -> HomoSolution:
    """Reference oracle: explicit bordered matrix, full symmetric
    eigendecomposition, same sign convention and certificates."""
    s = g_tilde.shape[0]
    F = np.empty((s + 1, s + 1))
    F[:s, :s] = 0.5 * (H_tilde + H_tilde.T)
    F[:s, s] = g_tilde
    F[s, :s] = g_tilde
    F[s, s] = -shift
    vals, vecs = np.linalg.eigh(F)
    lam = vals[0]
    w = vecs[:, 0]
    residual = float(np.linalg.norm(F @ w - lam * w))
    return _finalize(lam, w, g_tilde, shift, residual, hvp_count=0)


def materialize_restricted_hessian(hvp_restricted, s: int) -> np.ndarray:
    """Dense s-by-s restricted Hessian from its matrix-free action; costs
    s ambient Hessian-vector products. Used by the dense fallback path."""
    H = np.empty((s, s))
    e = np.zeros(s)
    for i in range(s):
        e[i] = 1.0
        H[:, i] = hvp_restricted(e)
        e[i] = 0.0
    return 0.5 * (H + H.T)


def extract_direction(sol: HomoSolution, sketch, nu: float = 0.0):
    """Ambient descent direction from the subproblem solution.

    With ``nu=0`` the homogeneous step P^T v / t is taken whenever t is
    numerically nonzero; a positive ``nu`` in (0, 1/2) widens the
    negative-curvature branch to |t| <= nu, where the direction is
    sign(-g~.v~) P^T v~.
    """
    if not 0.0 <= nu < 0.5:
        raise InvalidConfig(f"nu must lie in [0, 0.5), got {nu}")
    threshold = nu if nu > 0.0 else T_TOL
    if abs(sol.t) > threshold:
        return sketch.apply_transpose(sol.v_tilde) / sol.t, STEP_HOMOGENEOUS
    sign = -1.0 if sol.gv > 0.0 else 1.0
    return sign * sketch.apply_transpose(sol.v_tilde), STEP_NEGATIVE_CURVATURE
