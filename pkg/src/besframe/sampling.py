"""Random-Fourier-feature posterior samples and the threshold sets built from them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gp import GpPosterior
from .optimize import Box, projected_ascent

__all__ = [
    "RffSample",
    "ThresholdSet",
    "DEFAULT_FEATURES",
    "draw_posterior_sample",
    "sample_max_values",
    "shift_thresholds",
    "stack_thresholds",
]

DEFAULT_FEATURES = 500
KINDS = ("max_value", "shifted", "stacked")


@dataclass(frozen=True)
class RffSample:
    """x -> scale * sum_j w_j cos(<freq_j, x> + phase_j)."""

    frequencies: np.ndarray
    phases: np.ndarray
    weights: np.ndarray
    scale: float

    def __post_init__(self):
        if self.frequencies.shape[0] < 1:
            raise ValueError("need at least one feature")

    def features(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.scale * np.cos(X @ self.frequencies.T + self.phases)

    def __call__(self, X):
        return self.features(X) @ self.weights

    def value_and_grad(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        arg = X @ self.frequencies.T + self.phases
        val = self.scale * np.cos(arg) @ self.weights
        grad = -self.scale * (np.sin(arg) * self.weights) @ self.frequencies
        return val, grad


@dataclass(frozen=True)
class ThresholdSet:
    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        v = np.asarray(self.values, dtype=float)
        if v.size == 0:
            raise ValueError("threshold set must be non-empty")
        if self.kind == "stacked":
            if v.ndim != 2:
                raise ValueError("stacked thresholds must be a 2-d array")
            if np.any(np.diff(v, axis=1) <= 0):
                raise ValueError("stacked threshold vectors must be strictly ascending")
        else:
            v = v.reshape(-1)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]


def draw_posterior_sample(gp: GpPosterior, m: int = DEFAULT_FEATURES, rng=None,
                          min_noise: float = 1e-8) -> RffSample:
    """One approximate posterior function draw.

    Frequencies come from the SE kernel's spectral density; the weight
    vector is an exact draw from the Bayesian linear-model posterior, done
    in the n x n data space by conditioning a prior draw on the residuals.
    ``min_noise`` (relative to the signal variance) regularises noiseless data.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    rng = np.random.default_rng(rng)
    p = gp.params
    W = rng.standard_normal((m, p.dim)) / p.lengthscales
    b = rng.uniform(0.0, 2.0 * np.pi, m)
    scale = float(np.sqrt(2.0 * p.signal_variance / m))
    theta = rng.standard_normal(m)
    sample = RffSample(W, b, theta, scale)
    n = len(gp.data)
    if n == 0:
        return sample
    Phi = sample.features(gp.data.inputs)
    lam = max(p.noise_variance, min_noise * p.signal_variance)
    noise = np.sqrt(lam) * rng.standard_normal(n)
    G = Phi @ Phi.T
    resid = gp.data.observations - Phi @ theta - noise
    jitter = 0.0
    for _ in range(20):
        try:
            L = np.linalg.cholesky(G + (lam + jitter) * np.eye(n))
            break
        except np.linalg.LinAlgError:
            jitter = max(jitter * 10.0, 1e-10 * p.signal_variance)
    else:
        raise np.linalg.LinAlgError("feature Gram matrix is singular even with jitter")
    coef = np.linalg.solve(L.T, np.linalg.solve(L, resid))
    return RffSample(W, b, theta + Phi.T @ coef, scale)


def sample_max_values(gp: GpPosterior, domain: Box, n_samples: int = 5,
                      m: int = DEFAULT_FEATURES, rng=None, n_starts: int = 50,
                      steps: int = 100, n_screen: int = 1000) -> ThresholdSet:
    """Maximum values of ``n_samples`` posterior draws over ``domain``.

    Each draw is screened on ``n_screen`` random points plus the training
    inputs; its best ``n_starts`` points are refined by analytic-gradient
    ascent.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    rng = np.random.default_rng(rng)
    draws = [draw_posterior_sample(gp, m, rng) for _ in range(n_samples)]
    W = np.stack([s.frequencies for s in draws])  # (S, m, d)
    B = np.stack([s.phases for s in draws])[:, None, :]  # (S, 1, m)
    C = np.stack([s.weights for s in draws])[:, None, :] * draws[0].scale
    S, d = n_samples, domain.dim

    def value_and_grad(X, rows):
        sid = rows // n_starts
        val = np.empty(len(rows))
        grad = np.empty_like(X)
        for s in np.unique(sid):
            mask = sid == s
            arg = X[mask] @ W[s].T + B[s]
            val[mask] = np.cos(arg) @ C[s, 0]
            grad[mask] = -(np.sin(arg) * C[s]) @ W[s]
        return val, grad

    pool = domain.sample(max(n_screen, n_starts), rng)
    if len(gp.data):
        pool = np.vstack([domain.clip(gp.data.inputs), pool])
    pool_vals = np.stack([s(pool) for s in draws])  # (S, P)
    n_starts = min(n_starts, pool.shape[0])
    top = np.argsort(-pool_vals, axis=1, kind="stable")[:, :n_starts]
    X0 = pool[top].reshape(-1, d)
    _, fx = projected_ascent(None, X0, domain, steps, 0.05, value_and_grad=value_and_grad,
                                tol=1e-4)
    maxima = np.maximum(fx.reshape(S, -1).max(axis=1), pool_vals.max(axis=1))
    return ThresholdSet(maxima, "max_value")


def shift_thresholds(fstar: ThresholdSet, alpha: float) -> ThresholdSet:
    if fstar.kind != "max_value":
        raise ValueError("can only shift a max_value set")
    if alpha < 0:
        raise ValueError("tolerance must be non-negative")
    return ThresholdSet(fstar.values - alpha, "shifted")


def stack_thresholds(fstar: ThresholdSet, alpha: float) -> ThresholdSet:
    if fstar.kind != "max_value":
        raise ValueError("can only stack a max_value set")
    if alpha <= 0:
        raise ValueError("tolerance must be positive for stacked thresholds; "
                         "use the max-value set directly when it is zero")
    v = fstar.values
    return ThresholdSet(np.column_stack([v - alpha, v]), "stacked")
