"""Exact GP regression with a squared-exponential ARD kernel.

The posterior is stored through the Cholesky factor of ``K_DD + noise * I``
so that mean/variance queries are two triangular solves.  A prior mean of
zero is assumed throughout; callers normalise their data first.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

__all__ = [
    "KernelParams",
    "Dataset",
    "GpPosterior",
    "PosteriorMoments",
    "DegeneratePosteriorError",
    "FitFailureError",
    "DEFAULT_BOUNDS",
    "kernel",
    "kernel_matrix",
    "condition",
    "posterior",
    "incremental_conditional",
    "log_marginal_likelihood",
    "fit_mle",
]

JITTER_START = 1e-10
JITTER_MAX = 1e-4

# Box bounds in natural (not log) units; inputs are assumed to live in the unit cube.
DEFAULT_BOUNDS = {
    "lengthscale": (0.02, 2.0),
    "signal_variance": (0.05, 20.0),
    "noise_variance": (1e-6, 1.0),
}


class DegeneratePosteriorError(ValueError):
    """Raised when the observation variance is exactly zero."""


class FitFailureError(RuntimeError):
    """Raised when no restart of the likelihood search produced a finite value."""


@dataclass(frozen=True)
class KernelParams:
    lengthscales: np.ndarray
    signal_variance: float = 1.0
    noise_variance: float = 0.0

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", ls)
        if ls.ndim != 1 or np.any(ls <= 0):
            raise ValueError("lengthscales must be a positive 1-d array")
        if not self.signal_variance > 0:
            raise ValueError("signal_variance must be positive")
        if not self.noise_variance >= 0:
            raise ValueError("noise_variance must be non-negative")

    @property
    def dim(self) -> int:
        return self.lengthscales.size

    def replace(self, **kw) -> "KernelParams":
        fields = dict(
            lengthscales=self.lengthscales,
            signal_variance=self.signal_variance,
            noise_variance=self.noise_variance,
        )
        fields.update(kw)
        return KernelParams(**fields)


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    observations: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.inputs, dtype=float)
        y = np.asarray(self.observations, dtype=float).ravel()
        if X.ndim == 1:
            X = X.reshape(len(y), -1) if len(y) else X.reshape(0, 1)
        if X.shape[0] != y.shape[0]:
            raise ValueError(
                f"{X.shape[0]} inputs but {y.shape[0]} observations"
            )
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "observations", y)

    @classmethod
    def empty(cls, dim: int) -> "Dataset":
        return cls(np.zeros((0, dim)), np.zeros(0))

    def __len__(self) -> int:
        return self.observations.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def append(self, x, y) -> "Dataset":
        x = np.asarray(x, dtype=float).reshape(1, -1)
        return Dataset(
            np.vstack([self.inputs, x]), np.append(self.observations, float(y))
        )


@dataclass(frozen=True)
class PosteriorMoments:
    """Marginal posterior of f(x) (and of y_x through ``observation_variance``).

    Fields are scalars or equally shaped arrays.
    """

    mean: np.ndarray
    variance: np.ndarray
    noise_variance: float

    @property
    def std(self):
        return np.sqrt(self.variance)

    @property
    def observation_variance(self):
        return self.variance + self.noise_variance


def _as_2d(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(1, -1) if x.size == dim else x.reshape(-1, dim)
    if x.shape[-1] != dim:
        raise ValueError(f"expected inputs of dimension {dim}, got {x.shape[-1]}")
    return x


def kernel_matrix(X1, X2, params: KernelParams) -> np.ndarray:
    """Gram matrix between two stacks of points."""
    ls = params.lengthscales
    A = _as_2d(X1, ls.size) / ls
    B = _as_2d(X2, ls.size) / ls
    sq = (
        np.sum(A * A, axis=1)[:, None]
        + np.sum(B * B, axis=1)[None, :]
        - 2.0 * A @ B.T
    )
    np.maximum(sq, 0.0, out=sq)
    return params.signal_variance * np.exp(-0.5 * sq)


def kernel(x1, x2, params: KernelParams) -> float:
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if x1.shape != (params.dim,) or x2.shape != (params.dim,):
        raise ValueError(
            f"points must have dimension {params.dim}, got {x1.shape} and {x2.shape}"
        )
    r = (x1 - x2) / params.lengthscales
    return float(params.signal_variance * np.exp(-0.5 * np.dot(r, r)))


def _factor(K, scale, noise=0.0):
    """Cholesky with escalating diagonal jitter.

    No jitter is added up front when the noise term already exceeds the
    starting jitter, so well-posed systems are solved exactly.
    """
    start = JITTER_START * scale
    jitter = 0.0 if noise >= start else start
    n = K.shape[0]
    while True:
        try:
            return np.linalg.cholesky(K + jitter * np.eye(n)), jitter
        except np.linalg.LinAlgError:
            jitter = start if jitter == 0.0 else 2.0 * jitter
            if jitter > JITTER_MAX * max(scale, 1.0):
                raise


@dataclass(frozen=True)
class GpPosterior:
    params: KernelParams
    data: Dataset
    chol: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    jitter: float = 0.0

    @property
    def dim(self) -> int:
        return self.params.dim

    def predict(self, X, full_cov: bool = False):
        """Posterior mean and variance of f at a stack of points."""
        X = _as_2d(X, self.dim)
        prior_var = self.params.signal_variance
        if len(self.data) == 0:
            mean = np.zeros(X.shape[0])
            if full_cov:
                return mean, kernel_matrix(X, X, self.params)
            return mean, np.full(X.shape[0], prior_var)
        Kxd = kernel_matrix(X, self.data.inputs, self.params)
        mean = Kxd @ self.alpha
        v = solve_triangular(self.chol, Kxd.T, lower=True, check_finite=False)
        if full_cov:
            cov = kernel_matrix(X, X, self.params) - v.T @ v
            return mean, cov
        var = prior_var - np.einsum("ij,ij->j", v, v)
        return mean, np.maximum(var, 0.0)

    def moments(self, X) -> PosteriorMoments:
        mean, var = self.predict(X)
        return PosteriorMoments(mean, var, self.params.noise_variance)


def condition(params: KernelParams, data: Dataset) -> GpPosterior:
    """Build the posterior for ``data`` under fixed hyperparameters."""
    if len(data) and data.dim != params.dim:
        raise ValueError("data and kernel dimensions differ")
    if len(data) == 0:
        return GpPosterior(params, data, np.zeros((0, 0)), np.zeros(0))
    K = kernel_matrix(data.inputs, data.inputs, params)
    K[np.diag_indices_from(K)] += params.noise_variance
    L, jitter = _factor(K, params.signal_variance, params.noise_variance)
    alpha = cho_solve((L, True), data.observations, check_finite=False)
    return GpPosterior(params, data, L, alpha, jitter)


def posterior(gp: GpPosterior, x) -> PosteriorMoments:
    """Moments of f(x) for a single point (scalar fields) or a stack of points."""
    x = np.asarray(x, dtype=float)
    m = gp.moments(x)
    if x.ndim <= 1 and np.size(m.mean) == 1:
        return PosteriorMoments(
            float(m.mean[0]), float(m.variance[0]), m.noise_variance
        )
    return m


def incremental_conditional(moments: PosteriorMoments, y_x) -> PosteriorMoments:
    """Moments of f(x) after additionally observing ``y_x`` at the same x."""
    s2 = np.asarray(moments.variance, dtype=float)
    n2 = moments.noise_variance
    tot = s2 + n2
    if np.any(tot <= 0):
        raise DegeneratePosteriorError("observation variance is zero")
    mean = (s2 * np.asarray(y_x, dtype=float) + n2 * moments.mean) / tot
    var = s2 * n2 / tot
    return PosteriorMoments(mean, var, n2)


# -- marginal likelihood --------------------------------------------------

def _pack(params: KernelParams, fit_noise: bool) -> np.ndarray:
    theta = list(np.log(params.lengthscales)) + [np.log(params.signal_variance)]
    if fit_noise:
        theta.append(np.log(params.noise_variance))
    return np.array(theta)


def _unpack(theta, dim, fit_noise, noise_variance) -> KernelParams:
    theta = np.asarray(theta, dtype=float)
    noise = float(np.exp(theta[dim + 1])) if fit_noise else noise_variance
    return KernelParams(np.exp(theta[:dim]), float(np.exp(theta[dim])), noise)


def log_marginal_likelihood(params: KernelParams, data: Dataset, grad: bool = False,
                            fit_noise: bool = True):
    """GP log evidence; optionally with its gradient in log-hyperparameters.

    Gradient ordering: log lengthscales, log signal variance and (when
    ``fit_noise``) log noise variance.
    """
    X, y = data.inputs, data.observations
    n = len(y)
    Kf = kernel_matrix(X, X, params)
    K = Kf.copy()
    K[np.diag_indices_from(K)] += params.noise_variance
    try:
        L, _ = _factor(K, params.signal_variance, params.noise_variance)
    except np.linalg.LinAlgError:
        return (-np.inf, None) if grad else -np.inf
    alpha = cho_solve((L, True), y, check_finite=False)
    lml = -0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * np.log(2 * np.pi)
    if not grad:
        return lml
    Kinv = cho_solve((L, True), np.eye(n), check_finite=False)
    W = np.outer(alpha, alpha) - Kinv
    g = []
    for i, l in enumerate(params.lengthscales):
        d2 = (X[:, i][:, None] - X[:, i][None, :]) ** 2 / l**2
        g.append(0.5 * np.sum(W * (Kf * d2)))
    g.append(0.5 * np.sum(W * Kf))
    if fit_noise:
        g.append(0.5 * params.noise_variance * np.trace(W))
    return lml, np.array(g)


def fit_mle(data: Dataset, bounds=None, restarts: int = 10, rng_seed=None,
            noise_variance: float | None = None, init: KernelParams | None = None
            ) -> KernelParams:
    """Multi-start L-BFGS-B ascent on the log evidence in log-hyperparameter space.

    When ``noise_variance`` is given it is held fixed; otherwise it is fitted
    inside ``bounds["noise_variance"]``.  ``init``, if given, is used as an
    extra start point.
    """
    if len(data) < 2:
        raise ValueError("need at least two observations to fit hyperparameters")
    bounds = {**DEFAULT_BOUNDS, **(bounds or {})}
    dim = data.dim
    fit_noise = noise_variance is None
    box = [tuple(np.log(bounds["lengthscale"]))] * dim
    box.append(tuple(np.log(bounds["signal_variance"])))
    if fit_noise:
        box.append(tuple(np.log(bounds["noise_variance"])))
    lo, hi = np.array(box).T

    rng = np.random.default_rng(rng_seed)
    starts = [rng.uniform(lo, hi) for _ in range(max(restarts, 1))]
    if init is not None:
        starts.insert(0, np.clip(_pack(init, fit_noise), lo, hi))

    def objective(theta):
        p = _unpack(theta, dim, fit_noise, noise_variance)
        val, g = log_marginal_likelihood(p, data, grad=True, fit_noise=fit_noise)
        if not np.isfinite(val):
            return 1e25, np.zeros_like(theta)
        return -val, -g

    best_theta, best_val = None, -np.inf
    for theta0 in starts:
        f0 = -objective(theta0)[0]
        if f0 > best_val and f0 > -1e25:
            best_theta, best_val = theta0, f0
        try:
            res = minimize(objective, theta0, jac=True, method="L-BFGS-B",
                           bounds=list(zip(lo, hi)))
        except (ValueError, np.linalg.LinAlgError):
            continue
        if np.isfinite(res.fun) and -res.fun > best_val and res.fun < 1e25:
            best_theta, best_val = res.x, -res.fun
    if best_theta is None:
        raise FitFailureError("log marginal likelihood was non-finite at every start")
    return _unpack(best_theta, dim, fit_noise, noise_variance)
