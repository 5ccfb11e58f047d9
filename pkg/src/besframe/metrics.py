"""Evaluation metrics: level-set log losses and simple regret."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr

from .gp import Dataset, GpPosterior

__all__ = ["EvalGrid", "make_eval_grid", "lse_log_loss", "implicit_log_loss", "simple_regret"]

LOG_FLOOR = np.log(1e-300)


@dataclass(frozen=True)
class EvalGrid:
    points: np.ndarray
    truth: np.ndarray

    @property
    def size(self) -> int:
        return self.truth.shape[0]


def make_eval_grid(fn, rng, size: int = 7000, unit: bool = False) -> EvalGrid:
    """Uniform points in the function's domain (or the unit cube) with true values."""
    U = rng.random((size, fn.dim))
    X = fn.from_unit(U)
    return EvalGrid(U if unit else X, fn.evaluator(X))


def _log_side_prob(mu, sd, thr, above):
    """log p(f(x) on the true side of thr), true side given by ``above``."""
    sign = np.where(above, -1.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = sign * (thr - mu) / sd
    # zero variance: the posterior is a point mass at mu
    exact = np.where(sign * (thr - mu) > 0, 0.0, -np.inf)
    exact = np.where((sign < 0) & (mu == thr), 0.0, exact)
    return np.where(sd > 0, log_ndtr(np.where(sd > 0, z, 0.0)), exact)


def lse_log_loss(gp: GpPosterior, grid: EvalGrid, f_threshold: float) -> float:
    """Mean negative log posterior probability of each grid point's true side."""
    mu, var = gp.predict(grid.points)
    above = grid.truth >= f_threshold
    lp = _log_side_prob(mu, np.sqrt(var), f_threshold, above)
    return float(-np.mean(np.maximum(lp, LOG_FLOOR)))


def implicit_log_loss(gp: GpPosterior, grid: EvalGrid, fstar_set, alpha: float,
                      true_max: float) -> float:
    """As :func:`lse_log_loss`, with the threshold f* - alpha averaged over ``fstar_set``.

    Labels come from the true threshold ``true_max - alpha``.
    """
    fstar = np.asarray(getattr(fstar_set, "values", fstar_set), dtype=float).reshape(-1)
    if fstar.size == 0:
        raise ValueError("empty max-value set")
    mu, var = gp.predict(grid.points)
    sd = np.sqrt(var)
    above = grid.truth >= true_max - alpha
    lp = _log_side_prob(mu[:, None], sd[:, None], fstar[None, :] - alpha, above[:, None])
    # log of the average probability over the max-value samples
    m = np.max(lp, axis=1, keepdims=True)
    safe_m = np.where(np.isfinite(m), m, 0.0)
    log_avg = safe_m[:, 0] + np.log(np.mean(np.exp(lp - safe_m), axis=1))
    log_avg = np.where(np.isfinite(m[:, 0]), log_avg, -np.inf)
    return float(-np.mean(np.maximum(log_avg, LOG_FLOOR)))


def simple_regret(fn, data: Dataset, known_max: float | None = None) -> float:
    """True max minus the best true value among queried inputs (in ``fn``'s domain).

    Returns ``inf`` for an empty dataset (undefined regret).
    """
    top = fn.known_max if known_max is None else known_max
    if top is None:
        raise ValueError("regret needs a known maximum")
    if len(data) == 0:
        return float("inf")
    return float(top - np.max(fn.evaluator(data.inputs)))
