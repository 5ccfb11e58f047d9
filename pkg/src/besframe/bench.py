"""Synthetic objectives, their normalisation, and noisy evaluation."""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .optimize import Box

__all__ = [
    "BenchmarkFn",
    "UnknownBenchmarkError",
    "branin",
    "michalewicz",
    "hartmann3",
    "goldstein_price",
    "gp_sample_function",
    "BENCHMARKS",
    "PHOSPHORUS_PROXY",
    "make_benchmark",
    "normalize",
    "probe_grid",
    "locate_max",
    "observe",
    "list_benchmarks",
]


class UnknownBenchmarkError(KeyError):
    pass


@dataclass(frozen=True)
class BenchmarkFn:
    name: str
    dim: int
    domain: Box
    evaluator: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    known_max: float | None = None
    known_max_location: np.ndarray | None = field(default=None, repr=False)
    meta: dict = field(default_factory=dict, compare=False)

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        out = self.evaluator(np.atleast_2d(X))
        return float(out[0]) if single else out

    def from_unit(self, U):
        return self.domain.lower + np.asarray(U, dtype=float) * self.domain.width

    def to_unit(self, X):
        return (np.asarray(X, dtype=float) - self.domain.lower) / self.domain.width


# -- closed forms (minimisation conventions as usually published) ---------------

def branin(X):
    X = np.atleast_2d(X)
    x1, x2 = X[:, 0], X[:, 1]
    b, c, t = 5.1 / (4 * np.pi**2), 5 / np.pi, 1 / (8 * np.pi)
    return (x2 - b * x1**2 + c * x1 - 6) ** 2 + 10 * (1 - t) * np.cos(x1) + 10


def michalewicz(X, steepness: int = 10):
    X = np.atleast_2d(X)
    i = np.arange(1, X.shape[1] + 1)
    return -np.sum(np.sin(X) * np.sin(i * X**2 / np.pi) ** (2 * steepness), axis=1)


_H3_A = np.array([[3.0, 10, 30], [0.1, 10, 35], [3.0, 10, 30], [0.1, 10, 35]])
_H3_P = 1e-4 * np.array([[3689, 1170, 2673], [4699, 4387, 7470],
                         [1091, 8732, 5547], [381, 5743, 8828]])
_H3_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])


def hartmann3(X):
    X = np.atleast_2d(X)
    inner = np.sum(_H3_A[None] * (X[:, None, :] - _H3_P[None]) ** 2, axis=2)
    return -np.exp(-inner) @ _H3_ALPHA


def goldstein_price(X):
    X = np.atleast_2d(X)
    x1, x2 = X[:, 0], X[:, 1]
    a = 1 + (x1 + x2 + 1) ** 2 * (19 - 14 * x1 + 3 * x1**2 - 14 * x2 + 6 * x1 * x2 + 3 * x2**2)
    b = 30 + (2 * x1 - 3 * x2) ** 2 * (18 - 32 * x1 + 12 * x1**2 + 48 * x2 - 36 * x1 * x2 + 27 * x2**2)
    return a * b


def gp_sample_function(lengthscale: float, seed: int, dim: int = 2, n_features: int = 1024):
    """A fixed draw from a unit-variance SE-kernel GP prior on [0, 1]^dim."""
    rng = np.random.default_rng([int(seed), 7919])
    W = rng.standard_normal((n_features, dim)) / lengthscale
    b = rng.uniform(0, 2 * np.pi, n_features)
    w = rng.standard_normal(n_features) * np.sqrt(2.0 / n_features)

    def f(X):
        X = np.atleast_2d(X)
        out = np.empty(X.shape[0])
        for s in range(0, X.shape[0], 20000):
            out[s:s + 20000] = np.cos(X[s:s + 20000] @ W.T + b) @ w
        return out

    return f


BENCHMARKS = {
    "branin": (branin, Box([-5.0, 0.0], [10.0, 15.0])),
    "michalewicz2": (michalewicz, Box([0.0, 0.0], [np.pi, np.pi])),
    "hartmann3": (hartmann3, Box.unit(3)),
    "goldstein": (goldstein_price, Box([-2.0, -2.0], [2.0, 2.0])),
}

# Stand-in for the unavailable phosphorus field: fixed 2-d GP draw.
PHOSPHORUS_PROXY = {"lengthscale": 0.2, "seed": 20200, "noise_variance": 0.025}

_GP_RE = re.compile(
    r"^gp_sample\(\s*(?:l\s*=\s*)?([0-9.eE+-]+)\s*,\s*(?:seed\s*=\s*)?(\d+)\s*(?:,\s*(?:dim\s*=\s*)?(\d+)\s*)?\)$"
)


def list_benchmarks():
    return [*BENCHMARKS, "gp_sample(l, seed[, dim])", "phosphorus-proxy"]


def probe_grid(domain: Box, per_dim: int | None = None) -> np.ndarray:
    """Regular grid over ``domain`` (200^2 in 2-d, 40^3 in 3-d by default)."""
    if per_dim is None:
        per_dim = {1: 10000, 2: 200, 3: 40}.get(domain.dim, 10)
    axes = [np.linspace(l, u, per_dim) for l, u in zip(domain.lower, domain.upper)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dim)


def normalize(fn: BenchmarkFn, grid=None) -> BenchmarkFn:
    """Affinely rescale ``fn`` to zero mean and unit std over ``grid``."""
    grid = probe_grid(fn.domain) if grid is None else grid
    vals = fn.evaluator(grid)
    mean, sd = float(np.mean(vals)), float(np.std(vals))
    if not sd > 0:
        raise ValueError(f"{fn.name} has zero variance on the probe grid")
    base = fn.evaluator
    meta = {**fn.meta, "offset": mean, "scale": sd}
    kmax = None if fn.known_max is None else (fn.known_max - mean) / sd
    return replace(fn, evaluator=lambda X: (base(X) - mean) / sd, known_max=kmax, meta=meta)


def locate_max(fn: BenchmarkFn, n_grid: int | None = None, refine: int = 5):
    """Dense grid search plus L-BFGS-B polishing of the best grid points."""
    d = fn.dim
    if n_grid is None:
        n_grid = 10**6 if d <= 2 else 10**5 * d
    per_dim = int(round(n_grid ** (1.0 / d)))
    grid = probe_grid(fn.domain, per_dim)
    vals = np.concatenate([fn.evaluator(grid[s:s + 100000]) for s in range(0, len(grid), 100000)])
    order = np.argsort(-vals, kind="stable")[:refine]
    best_x, best_v = grid[order[0]].copy(), float(vals[order[0]])
    bounds = list(zip(fn.domain.lower, fn.domain.upper))
    for i in order:
        res = minimize(lambda x: -fn.evaluator(x[None])[0], grid[i], method="L-BFGS-B", bounds=bounds)
        if -res.fun > best_v:
            best_x, best_v = res.x, float(-res.fun)
    return best_v, best_x


def _parse(name: str):
    key = name.strip().lower()
    if key in BENCHMARKS:
        f, box = BENCHMARKS[key]
        meta = {"steepness": 10} if key == "michalewicz2" else {}
        return key, f, box, meta
    if key in ("phosphorus-proxy", "phosphorus_proxy", "phosphorus"):
        p = PHOSPHORUS_PROXY
        f = gp_sample_function(p["lengthscale"], p["seed"])
        return "phosphorus-proxy", f, Box.unit(2), dict(p)
    m = _GP_RE.match(key)
    if m:
        l, seed = float(m.group(1)), int(m.group(2))
        dim = int(m.group(3)) if m.group(3) else 2
        f = gp_sample_function(l, seed, dim)
        label = f"gp_sample(l={l:g}, seed={seed}" + (f", dim={dim})" if dim != 2 else ")")
        return label, f, Box.unit(dim), {"lengthscale": l, "seed": seed}
    raise UnknownBenchmarkError(name)


def make_benchmark(name: str, negate: bool = False, normalized: bool = True,
                   with_max: bool = True) -> BenchmarkFn:
    """Build a registered objective; cached, so repeated calls are cheap."""
    return _make_cached(name.strip().lower(), bool(negate), bool(normalized), bool(with_max))


@lru_cache(maxsize=32)
def _make_cached(name, negate, normalized, with_max):
    label, f, box, meta = _parse(name)
    evaluator = (lambda X: -f(X)) if negate else f
    fn = BenchmarkFn(label + ("[neg]" if negate else ""), box.dim, box, evaluator,
                     meta={**meta, "negated": negate})
    if normalized:
        fn = normalize(fn)
    if with_max:
        v, x = locate_max(fn)
        fn = replace(fn, known_max=v, known_max_location=x)
    return fn


def observe(fn: BenchmarkFn, x, noise_variance: float, rng) -> float:
    value = fn(np.asarray(x, dtype=float))
    if noise_variance <= 0:
        return value
    return value + float(np.sqrt(noise_variance) * rng.standard_normal())
