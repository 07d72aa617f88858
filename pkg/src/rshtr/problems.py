"""Benchmark objectives with analytic gradients and Hessian-vector products.

All problems are immutable after construction and expose ``objective()``
returning a fresh counted :class:`~rshtr.operators.Objective`, so a harness
can run many trials concurrently on separate instances. Problems with a
computable minimizer expose ``known_minimizer()`` for error metrics.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.special import expit, logsumexp

from .errors import InvalidConfig
from .operators import Objective


# -- Rosenbrock chain ---------------------------------------------------------

def rosenbrock_value(z: np.ndarray) -> float:
    return float(np.sum(100.0 * (z[1:] - z[:-1] ** 2) ** 2 + (z[:-1] - 1.0) ** 2))


def rosenbrock_grad(z: np.ndarray) -> np.ndarray:
    g = np.zeros_like(z)
    diff = z[1:] - z[:-1] ** 2
    g[:-1] = -400.0 * z[:-1] * diff + 2.0 * (z[:-1] - 1.0)
    g[1:] += 200.0 * diff
    return g


def rosenbrock_hess_bands(z: np.ndarray):
    """(diagonal, first off-diagonal) of the tridiagonal Hessian."""
    n = z.shape[0]
    diag = np.zeros(n)
    diag[:-1] = -400.0 * z[1:] + 1200.0 * z[:-1] ** 2 + 2.0
    diag[1:] += 200.0
    off = -400.0 * z[:-1]
    return diag, off


def rosenbrock_hess_mult(z: np.ndarray, w: np.ndarray) -> np.ndarray:
    diag, off = rosenbrock_hess_bands(z)
    out = diag * w
    out[:-1] += off * w[1:]
    out[1:] += off * w[:-1]
    return out


def rosenbrock_hess_matmul(z: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Tridiagonal Hessian times an (n, m) matrix, column-wise."""
    diag, off = rosenbrock_hess_bands(z)
    out = diag[:, None] * W
    out[:-1] += off[:, None] * W[1:]
    out[1:] += off[:, None] * W[:-1]
    return out


class RosenbrockProblem:
    """Plain chained Rosenbrock, mostly as a small sanity objective."""

    def __init__(self, n: int, name: str = ""):
        if n < 2:
            raise InvalidConfig("Rosenbrock needs n >= 2")
        self.n = n
        self.dim = n
        self.name = name or f"rosenbrock{n}"

    def value(self, x):
        return rosenbrock_value(x)

    def grad(self, x):
        return rosenbrock_grad(x)

    def hvp(self, x, v):
        return rosenbrock_hess_mult(x, v)

    def known_minimizer(self):
        return np.ones(self.n)

    def default_start(self, seed: int = 0):
        return np.zeros(self.n)

    def objective(self) -> Objective:
        return Objective(self.dim, self.value, self.grad, self.hvp, name=self.name)


# -- Quadratic ----------------------------------------------------------------

class QuadraticProblem:
    """f(x) = x . (D x) / 2 - b . x with a diagonal spectrum D."""

    def __init__(self, diag: np.ndarray, b: np.ndarray, name: str = ""):
        diag = np.asarray(diag, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if diag.shape != b.shape or diag.ndim != 1:
            raise InvalidConfig("diag and b must be 1-d arrays of equal length")
        self.diag = diag
        self.b = b
        self.dim = diag.shape[0]
        self.name = name or f"quadratic{self.dim}"

    def value(self, x):
        return float(0.5 * x @ (self.diag * x) - self.b @ x)

    def grad(self, x):
        return self.diag * x - self.b

    def hvp(self, x, v):
        return self.diag * v

    def known_minimizer(self):
        if np.any(self.diag <= 0):
            return None
        return self.b / self.diag

    def default_start(self, seed: int = 0):
        rng = np.random.default_rng(seed)
        offset = rng.standard_normal(self.dim)
        offset /= np.linalg.norm(offset)
        xstar = self.known_minimizer()
        base = xstar if xstar is not None else np.zeros(self.dim)
        return base + offset

    def objective(self) -> Objective:
        return Objective(self.dim, self.value, self.grad, self.hvp, name=self.name)


def make_quadratic(seed: int, n: int, cond: float = 100.0) -> QuadraticProblem:
    """Convex quadratic with a geometric spectrum from 1 to ``cond`` and a
    unit-scale random minimizer."""
    if cond < 1.0:
        raise InvalidConfig("cond must be >= 1")
    rng = np.random.default_rng(seed)
    diag = np.geomspace(1.0, cond, n)
    xstar = rng.standard_normal(n) / np.sqrt(n)
    b = diag * xstar
    return QuadraticProblem(diag, b, name=f"quadratic{n}_k{int(cond)}")


# -- Low effective dimension Rosenbrock ---------------------------------------

class LERProblem:
    """Rosenbrock composed with an orthogonal projector of rank r < n.

    f(x) = R(A^T A x) where A has orthonormal rows, so f only varies over
    the r-dimensional row space of A and is constant along its complement.
    """

    def __init__(self, A: np.ndarray, name: str = ""):
        A = np.asarray(A, dtype=np.float64)
        r, n = A.shape
        if not 1 <= r < n:
            raise InvalidConfig("need 1 <= r < n rows in A")
        self.A = A
        self.r = r
        self.n = n
        self.dim = n
        self.name = name or f"ler{n}_r{r}"

    def project(self, x):
        return self.A.T @ (self.A @ x)

    def value(self, x):
        return rosenbrock_value(self.project(x))

    def grad(self, x):
        m = self.project(x)
        return self.project(rosenbrock_grad(m))

    def hvp(self, x, v):
        m = self.project(x)
        return self.project(rosenbrock_hess_mult(m, self.project(v)))

    def effective_hessian(self, y: np.ndarray) -> np.ndarray:
        """Dense r-by-r Hessian of l(y) = R(A^T y)."""
        m = self.A.T @ y
        return self.A @ rosenbrock_hess_matmul(m, self.A.T)

    def known_minimizer(self, y0: Optional[np.ndarray] = None) -> np.ndarray:
        """Minimizer computed by an exact trust-region solve of the
        r-dimensional effective problem, polished by Newton steps."""
        from scipy.optimize import minimize

        def l_val(y):
            return rosenbrock_value(self.A.T @ y)

        def l_grad(y):
            return self.A @ rosenbrock_grad(self.A.T @ y)

        y = np.zeros(self.r) if y0 is None else np.asarray(y0, dtype=np.float64)
        res = minimize(l_val, y, jac=l_grad, hess=self.effective_hessian,
                       method="trust-exact", options={"gtol": 1e-12, "maxiter": 2000})
        y = res.x
        for _ in range(5):
            g = l_grad(y)
            if np.linalg.norm(g) == 0.0:
                break
            y = y - np.linalg.solve(self.effective_hessian(y), g)
        return self.A.T @ y

    def default_start(self, seed: int = 0):
        rng = np.random.default_rng(seed)
        return 0.1 * rng.standard_normal(self.n) / np.sqrt(self.n)

    def objective(self) -> Objective:
        return Objective(self.dim, self.value, self.grad, self.hvp, name=self.name)


def make_ler(seed: int, n: int, r: int) -> LERProblem:
    """Random effective subspace: A is the orthonormalization of an r-by-n
    Gaussian draw, making A^T A an exact orthogonal projector of rank r."""
    if not 1 <= r < n:
        raise InvalidConfig(f"need 1 <= r < n, got r={r}, n={n}")
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((r, n))
    Q, _ = np.linalg.qr(G.T)  # (n, r), orthonormal columns
    return LERProblem(Q.T, name=f"ler{n}_r{r}")


# -- Matrix factorization ------------------------------------------------------

class MFProblem:
    """Frobenius matrix factorization, optionally masked.

    Decision variable x = [vec(U); vec(V)] (row-major), U is n_u-by-k and
    V is k-by-n_v; f = ||(U V - R) * mask||_F^2 / (n_u n_v). A missing mask
    means all entries are observed.
    """

    def __init__(self, R: np.ndarray, k: int, mask: Optional[np.ndarray] = None,
                 name: str = "", true_factors=None):
        R = np.asarray(R, dtype=np.float64)
        if R.ndim != 2:
            raise InvalidConfig("target must be a matrix")
        self.R = R
        self.n_u, self.n_v = R.shape
        self.k = int(k)
        if self.k < 1:
            raise InvalidConfig("k must be >= 1")
        if mask is not None:
            mask = np.asarray(mask, dtype=np.float64)
            if mask.shape != R.shape:
                raise InvalidConfig("mask shape must match target shape")
        self.mask = mask
        self.dim = (self.n_u + self.n_v) * self.k
        self.name = name or f"mf{self.n_u}x{self.n_v}_k{self.k}"
        self.true_factors = true_factors
        self._scale = 1.0 / (self.n_u * self.n_v)

    def unpack(self, x):
        nu, nv, k = self.n_u, self.n_v, self.k
        U = x[: nu * k].reshape(nu, k)
        V = x[nu * k:].reshape(k, nv)
        return U, V

    def pack(self, U, V):
        return np.concatenate([U.ravel(), V.ravel()])

    def _residual(self, U, V):
        E = U @ V - self.R
        if self.mask is not None:
            E = E * self.mask
        return E

    def value(self, x):
        E = self._residual(*self.unpack(x))
        return float(self._scale * np.sum(E * E))

    def grad(self, x):
        U, V = self.unpack(x)
        E = self._residual(U, V)
        gU = 2.0 * self._scale * (E @ V.T)
        gV = 2.0 * self._scale * (U.T @ E)
        return self.pack(gU, gV)

    def hvp(self, x, v):
        U, V = self.unpack(x)
        dU, dV = self.unpack(v)
        E = self._residual(U, V)
        dE = dU @ V + U @ dV
        if self.mask is not None:
            dE = dE * self.mask
        hU = 2.0 * self._scale * (dE @ V.T + E @ dV.T)
        hV = 2.0 * self._scale * (U.T @ dE + dU.T @ E)
        return self.pack(hU, hV)

    def known_minimizer(self):
        return None

    def default_start(self, seed: int = 0):
        rng = np.random.default_rng(seed)
        return rng.standard_normal(self.dim) / np.sqrt(self.k)

    def objective(self) -> Objective:
        return Objective(self.dim, self.value, self.grad, self.hvp, name=self.name)


def make_mf(seed: int, n_u: int, n_v: int, k: int, masked: bool = False,
            mask_density: float = 0.5, noise: float = 0.0) -> MFProblem:
    """Synthetic low-rank target R = U* V* (+ optional Gaussian noise),
    optionally with a random observation mask."""
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((n_u, k)) / k ** 0.25
    V = rng.standard_normal((k, n_v)) / k ** 0.25
    R = U @ V
    if noise > 0.0:
        R = R + noise * rng.standard_normal(R.shape)
    mask = None
    if masked:
        if not 0.0 < mask_density <= 1.0:
            raise InvalidConfig("mask_density must lie in (0, 1]")
        mask = (rng.random((n_u, n_v)) < mask_density).astype(np.float64)
    name = f"mfm{n_u}x{n_v}_k{k}" if masked else f"mf{n_u}x{n_v}_k{k}"
    return MFProblem(R, k, mask=mask, name=name, true_factors=(U, V))


# -- Classification ------------------------------------------------------------

def _augment_bias(X):
    """Append a constant-1 feature column (bias absorbed into the weights)."""
    if sp.issparse(X):
        ones = np.ones((X.shape[0], 1))
        return sp.csr_array(sp.hstack([sp.csr_array(X), sp.csr_array(ones)]))
    X = np.asarray(X, dtype=np.float64)
    return np.hstack([X, np.ones((X.shape[0], 1))])


class LogisticProblem:
    """Binary cross-entropy with labels in {0, 1}; weights include a bias."""

    def __init__(self, X, y, name: str = ""):
        self.Xb = _augment_bias(X)
        y = np.asarray(y, dtype=np.float64).ravel()
        if set(np.unique(y)) - {0.0, 1.0}:
            raise InvalidConfig("logistic labels must be 0/1")
        if y.shape[0] != self.Xb.shape[0]:
            raise InvalidConfig("label count must match row count")
        self.y = y
        self.sign = 2.0 * y - 1.0
        self.N = y.shape[0]
        self.dim = self.Xb.shape[1]
        self.name = name or f"logistic_n{self.dim}"

    def _margins(self, w):
        return np.asarray(self.Xb @ w).ravel()

    def value(self, w):
        return float(np.mean(np.logaddexp(0.0, -self.sign * self._margins(w))))

    def grad(self, w):
        p = expit(self._margins(w))
        return np.asarray(self.Xb.T @ ((p - self.y) / self.N)).ravel()

    def hvp(self, w, v):
        m = self._margins(w)
        p = expit(m)
        weights = p * (1.0 - p) / self.N
        return np.asarray(self.Xb.T @ (weights * np.asarray(self.Xb @ v).ravel())).ravel()

    def known_minimizer(self):
        return None

    def default_start(self, seed: int = 0):
        return np.zeros(self.dim)

    def objective(self) -> Objective:
        return Objective(self.dim, self.value, self.grad, self.hvp, name=self.name)


class SoftmaxProblem:
    """Multinomial cross-entropy; weights are a (K, d+1) matrix flattened
    row-major, one row of logit weights per class."""

    def __init__(self, X, y, n_classes: int, name: str = ""):
        self.Xb = _augment_bias(X)
        y = np.asarray(y)
        if y.shape[0] != self.Xb.shape[0]:
            raise InvalidConfig("label count must match row count")
        self.y = y.astype(np.int64)
        self.K = int(n_classes)
        if self.K < 2:
            raise InvalidConfig("need at least 2 classes")
        if self.y.min() < 0 or self.y.max() >= self.K:
            raise InvalidConfig("labels must lie in [0, n_classes)")
        self.N = self.y.shape[0]
        self.d1 = self.Xb.shape[1]
        self.dim = self.K * self.d1
        self.name = name or f"softmax_k{self.K}_n{self.dim}"

    def _logits(self, w):
        W = w.reshape(self.K, self.d1)
        return np.asarray(self.Xb @ W.T)

    def value(self, w):
        Z = self._logits(w)
        lse = logsumexp(Z, axis=1)
        return float(np.mean(lse - Z[np.arange(self.N), self.y]))

    def _probs(self, Z):
        Z = Z - Z.max(axis=1, keepdims=True)
        P = np.exp(Z)
        P /= P.sum(axis=1, keepdims=True)
        return P

    def grad(self, w):
        P = self._probs(self._logits(w))
        P[np.arange(self.N), self.y] -= 1.0
        G = np.asarray(self.Xb.T @ P).T / self.N
        return G.ravel()

    def hvp(self, w, v):
        D = v.reshape(self.K, self.d1)
        P = self._probs(self._logits(w))
        S = np.asarray(self.Xb @ D.T)
        T = P * (S - np.sum(P * S, axis=1, keepdims=True))
        H = np.asarray(self.Xb.T @ T).T / self.N
        return H.ravel()

    def known_minimizer(self):
        return None

    def default_start(self, seed: int = 0):
        return np.zeros(self.dim)

    def objective(self) -> Objective:
        return Objective(self.dim, self.value, self.grad, self.hvp, name=self.name)


def make_classification(X, y, task: str = "logistic", n_classes: Optional[int] = None,
                        feature_limit: Optional[int] = 10_000,
                        sample_limit: Optional[int] = 1_000,
                        name: str = ""):
    """Classification problem from a loaded dataset.

    Large datasets are truncated to the first ``feature_limit`` features
    and ``sample_limit`` rows. Labels are remapped to contiguous class
    indices (sorted by original label value).
    """
    y = np.asarray(y).ravel()
    if sample_limit is not None and X.shape[0] > sample_limit:
        X = X[:sample_limit]
        y = y[:sample_limit]
    if feature_limit is not None and X.shape[1] > feature_limit:
        X = X[:, :feature_limit]
    classes = np.unique(y)
    index = {c: i for i, c in enumerate(classes.tolist())}
    y_idx = np.array([index[c] for c in y.tolist()], dtype=np.int64)
    if task == "logistic":
        if classes.shape[0] != 2:
            raise InvalidConfig(f"logistic task needs 2 label values, found {classes.shape[0]}")
        return LogisticProblem(X, y_idx.astype(np.float64), name=name)
    if task == "softmax":
        k = n_classes if n_classes is not None else classes.shape[0]
        return SoftmaxProblem(X, y_idx, k, name=name)
    raise InvalidConfig(f"unknown classification task {task!r}")


def make_synthetic_classification(seed: int, n_samples: int, n_features: int,
                                  n_classes: int = 2, task: str = "logistic"):
    """Gaussian features with labels drawn from a random linear model."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_samples, n_features))
    W = rng.standard_normal((n_classes, n_features + 1))
    logits = np.hstack([X, np.ones((n_samples, 1))]) @ W.T
    y = np.argmax(logits + rng.gumbel(size=logits.shape), axis=1)
    if task == "logistic":
        return LogisticProblem(X, (y % 2).astype(np.float64),
                               name=f"logistic_synth{n_samples}x{n_features}")
    return SoftmaxProblem(X, y, n_classes, name=f"softmax_synth{n_samples}x{n_features}")
