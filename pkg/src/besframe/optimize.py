"""Maximisation of cheap criteria over a box: random screening plus projected ascent."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Box", "OptimizerConfig", "OptimizerFailure", "projected_ascent",
           "fd_gradient", "maximize_acquisition"]


class OptimizerFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ValueError("box must have upper > lower in every dimension")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, dim: int) -> "Box":
        return cls(np.zeros(dim), np.ones(dim))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def sample(self, n: int, rng) -> np.ndarray:
        return self.lower + self.width * rng.random((n, self.dim))

    def clip(self, X):
        return np.clip(X, self.lower, self.upper)

    def contains(self, X) -> bool:
        X = np.atleast_2d(X)
        return bool(np.all(X >= self.lower) and np.all(X <= self.upper))


@dataclass(frozen=True)
class OptimizerConfig:
    n_random_candidates: int = 2000
    n_ascent_starts: int = 10
    ascent_steps: int = 100
    step_size: float = 0.05
    rng_seed: int | None = None

    def __post_init__(self):
        for name in ("n_random_candidates", "n_ascent_starts", "ascent_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")


def _finite(v):
    v = np.asarray(v, dtype=float)
    return np.where(np.isfinite(v), v, -np.inf)


def fd_gradient(f, X, box: Box, rel_step: float = 1e-5):
    """Central differences; returns (f(X), grad) using one batched call.

    Points on a face are differenced one-sidedly inward.
    """
    X = np.atleast_2d(X)
    n, d = X.shape
    h = rel_step * box.width
    plus = np.repeat(X[:, None, :], d, axis=1)
    minus = plus.copy()
    idx = np.arange(d)
    plus[:, idx, idx] = np.minimum(X + h, box.upper)
    minus[:, idx, idx] = np.maximum(X - h, box.lower)
    batch = np.concatenate([X, plus.reshape(-1, d), minus.reshape(-1, d)])
    vals = _finite(f(batch))
    fx = vals[:n]
    fp = vals[n:n + n * d].reshape(n, d)
    fm = vals[n + n * d:].reshape(n, d)
    span = plus[:, idx, idx] - minus[:, idx, idx]
    with np.errstate(invalid="ignore"):
        g = (fp - fm) / span
    g[~np.isfinite(g)] = 0.0
    return fx, g


def projected_ascent(f, X0, box: Box, steps: int = 100, step_size: float = 0.05,
                     value_and_grad=None, tol: float = 1e-6):
    """Per-start adaptive projected gradient ascent.

    Each start takes a step of ``step_size`` (as a fraction of the box width)
    along its scaled gradient; improving steps are accepted and lengthen the
    step, others are rejected and halve it.  Values therefore never decrease.
    A start stops once its step falls below ``tol``.

    ``value_and_grad(X, rows)`` may be supplied instead of ``f``; ``rows``
    indexes the starts that ``X`` belongs to.
    """
    if value_and_grad is None:
        value_and_grad = lambda X, rows: fd_gradient(f, X, box)
    X = box.clip(np.atleast_2d(np.asarray(X0, dtype=float)).copy())
    everyone = np.arange(X.shape[0])
    fx, g = value_and_grad(X, everyone)
    fx = _finite(fx)
    g = np.array(g, dtype=float)
    eta = np.full(X.shape[0], step_size)
    for _ in range(steps):
        direction = g * box.width
        norm = np.max(np.abs(direction), axis=1)
        rows = np.flatnonzero((norm > 0) & (eta >= tol))
        if rows.size == 0:
            break
        step = eta[rows, None] * box.width * direction[rows] / norm[rows, None]
        trial = box.clip(X[rows] + step)
        ft, gt = value_and_grad(trial, rows)
        ft = _finite(ft)
        better = ft > fx[rows]
        acc = rows[better]
        X[acc] = trial[better]
        fx[acc] = ft[better]
        g[acc] = gt[better]
        eta[acc] = np.minimum(eta[acc] * 1.5, 0.5)
        eta[rows[~better]] *= 0.5
    return X, fx


def maximize_acquisition(criterion, domain: Box, cfg: OptimizerConfig = OptimizerConfig(),
                         rng=None, extra_candidates=None):
    """Best of random screening and ascent refinements of the top screened points.

    ``criterion`` maps an (N, d) array to N values.  Ties go to the lowest
    candidate index.  Returns ``(x, value)``.
    """
    rng = np.random.default_rng(cfg.rng_seed) if rng is None else rng
    cands = domain.sample(cfg.n_random_candidates, rng)
    if extra_candidates is not None and len(extra_candidates):
        cands = np.vstack([domain.clip(np.atleast_2d(extra_candidates)), cands])
    vals = _finite(criterion(cands))
    if not np.any(np.isfinite(vals)):
        raise OptimizerFailure("criterion is non-finite at every candidate")
    k = min(cfg.n_ascent_starts, len(cands))
    # stable sort keeps lowest index first among ties
    top = np.argsort(-vals, kind="stable")[:k]
    X, fx = projected_ascent(criterion, cands[top], domain, cfg.ascent_steps, cfg.step_size)
    best_c = int(np.argmax(vals))
    best_a = int(np.argmax(fx))
    if fx[best_a] > vals[best_c]:
        return X[best_a].copy(), float(fx[best_a])
    return cands[best_c].copy(), float(vals[best_c])
