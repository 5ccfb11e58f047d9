"""Acquisition and active-learning criteria.

Every criterion has a moments-level form (``*_value``) taking a
:class:`~besframe.gp.PosteriorMoments` plus thresholds and returning one value
per candidate, and a model-level wrapper taking ``(gp, x, ...)``.

Label convention: ``+1`` means f(x) lies below the threshold, ``-1`` means it
lies at or above it.  The information criteria are all computed as

    H(class | D) - E_y[ H(class | D, y) ]

with the prior entropy in closed form and the expectation over the noisy
observation done by deterministic quadrature.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import log_ndtr, ndtr

from .gp import GpPosterior, PosteriorMoments
from .sampling import ThresholdSet

__all__ = [
    "ClassProbInputs",
    "AcquisitionSpec",
    "CRITERIA",
    "DegenerateNoiseError",
    "DEFAULT_NODES",
    "class_prob",
    "class_prob_given_y",
    "binary_entropy",
    "interval_probs",
    "information_integrand",
    "bes_value",
    "bes_k_value",
    "em_value",
    "straddle_value",
    "ucb_value",
    "ei_value",
    "mes_value",
    "bes",
    "em",
    "straddle",
    "bes_mp",
    "bes_mp_implicit",
    "bes_k",
    "bes2_mp",
    "ucb",
    "ei",
    "mes",
    "make_criterion",
]

DEFAULT_NODES = 64
STRADDLE_WIDTH = 1.96
PROB_FLOOR = 1e-300
# Posterior class entropy is below 1e-20 once every |g_j| exceeds this.
_WINDOW = 10.0
# Standard-normal mass beyond this many deviations is below 1e-22.
_TAIL = 10.0
_PANELS = 8

CRITERIA = (
    "BES", "EM", "STRDL", "BES_MP", "BES_MP_IMPLICIT", "BES2_MP", "BESK",
    "UCB", "EI", "MES",
)


class DegenerateNoiseError(ValueError):
    """The noisy-observation branch was requested with zero noise variance."""


@dataclass(frozen=True)
class ClassProbInputs:
    moments: PosteriorMoments
    threshold: float


# -- small numerical helpers ----------------------------------------------

def _xlogx(p):
    p = np.asarray(p, dtype=float)
    return p * np.log(np.maximum(p, PROB_FLOOR))


def binary_entropy(p):
    """Entropy (nats) of a Bernoulli(p); 0 log 0 = 0."""
    p = np.clip(p, 0.0, 1.0)
    return -(_xlogx(p) + _xlogx(1.0 - p))


def interval_probs(z):
    """Standard-normal mass of the k+1 cells cut by ascending points ``z``.

    ``z`` has shape (..., k); the result has shape (..., k+1).  Cells lying
    in the upper tail are differenced through the survival function so that
    small masses keep their relative precision.
    """
    z = np.asarray(z, dtype=float)
    cdf = ndtr(z)
    sf = ndtr(-z)
    if z.shape[-1] == 1:
        return np.clip(np.concatenate([cdf, sf], axis=-1), 0.0, 1.0)
    zl = z[..., :-1]
    mid = np.where(zl > 0, sf[..., :-1] - sf[..., 1:], cdf[..., 1:] - cdf[..., :-1])
    p = np.concatenate([cdf[..., :1], mid, sf[..., -1:]], axis=-1)
    return np.clip(p, 0.0, 1.0)


def _categorical_entropy(p):
    return -np.sum(_xlogx(p), axis=-1)


@lru_cache(maxsize=None)
def _hermite(n):
    x, w = np.polynomial.hermite_e.hermegauss(n)
    return x, w / np.sqrt(2.0 * np.pi)


@lru_cache(maxsize=None)
def _legendre(n):
    return np.polynomial.legendre.leggauss(n)


def _std_normal_pdf(x):
    return np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


# -- class probabilities ---------------------------------------------------

def _check_label(label):
    if label not in (1, -1):
        raise ValueError("label must be +1 or -1")


def class_prob(inputs: ClassProbInputs, label: int):
    """p(label | D): +1 is f(x) < threshold, -1 is f(x) >= threshold."""
    _check_label(label)
    m = inputs.moments
    mu = np.asarray(m.mean, dtype=float)
    var = np.asarray(m.variance, dtype=float)
    thr = inputs.threshold
    sd = np.sqrt(var)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = ndtr(label * (thr - mu) / np.where(sd > 0, sd, 1.0))
    below = (mu < thr).astype(float)
    exact = below if label == 1 else 1.0 - below
    out = np.where(sd > 0, p, exact)
    return out if out.ndim else float(out)


def _g(mu, var, noise, thr, y):
    sx, sn = np.sqrt(var), np.sqrt(noise)
    tot = var + noise
    return (tot * thr - noise * mu - var * y) / (sx * sn * np.sqrt(tot))


def class_prob_given_y(inputs: ClassProbInputs, y, label: int):
    """p(label | D, y_x): class probability after also observing ``y`` at x."""
    _check_label(label)
    m = inputs.moments
    if m.noise_variance <= 0:
        raise DegenerateNoiseError(
            "zero noise variance: the label is fixed by y; use the noiseless branch"
        )
    if np.any(np.asarray(m.variance) <= 0):
        raise ValueError("posterior variance must be positive")
    g = _g(np.asarray(m.mean), np.asarray(m.variance), m.noise_variance,
           inputs.threshold, np.asarray(y, dtype=float))
    out = ndtr(label * g)
    return out if np.ndim(out) else float(out)


def information_integrand(moments: PosteriorMoments, thresholds, y):
    """KL term sum_c p(c|D,y) log p(c|D,y)/p(c|D) at observation values ``y``.

    Its expectation under y ~ N(mu, sigma_+^2) is the information gain.  This
    is the reparameterised form: with y = mu + sigma_+ * eps the gradient can
    be pushed through the samples.  Shapes: moments fields (N,), thresholds
    (k,) or (N, k), y (N, Q); result (N, Q).
    """
    mu = np.atleast_1d(np.asarray(moments.mean, dtype=float))
    var = np.atleast_1d(np.asarray(moments.variance, dtype=float))
    if moments.noise_variance <= 0:
        raise DegenerateNoiseError("integrand undefined without observation noise")
    b = np.broadcast_to(np.asarray(thresholds, dtype=float), mu.shape + (np.shape(thresholds)[-1],))
    sd = np.sqrt(var)
    prior = interval_probs((b - mu[:, None]) / sd[:, None])
    y = np.atleast_2d(np.asarray(y, dtype=float))
    g = _g(mu[:, None, None], var[:, None, None], moments.noise_variance,
           b[:, None, :], y[:, :, None])
    post = interval_probs(g)
    ratio = np.log(np.maximum(post, PROB_FLOOR)) - np.log(np.maximum(prior[:, None, :], PROB_FLOOR))
    return np.sum(post * ratio, axis=-1)


# -- core: information about a (k+1)-class label -----------------------------

def _expected_posterior_entropy(c, r, nodes):
    """E_eps[ H(cells cut by g_j = (c_j - eps)/r) ], eps ~ N(0, 1).

    ``c``: (N, k) ascending; ``r``: (N,) positive.
    """
    N, k = c.shape
    out = np.zeros(N)
    smooth = r >= 1.0
    if np.any(smooth):
        eps, w = _hermite(nodes)
        cs, rs = c[smooth], r[smooth]
        g = (cs[:, None, :] - eps[None, :, None]) / rs[:, None, None]
        # g descends in eps but ascends in j; interval_probs needs ascending in j only
        out[smooth] = _categorical_entropy(interval_probs(g)) @ w
    narrow = ~smooth
    if np.any(narrow):
        cn, rn = c[narrow], r[narrow]
        half = _WINDOW * rn[:, None]
        lo = np.clip(cn - half, -_TAIL, _TAIL)
        hi = np.clip(cn + half, -_TAIL, _TAIL)
        # merge overlapping windows so no region is integrated twice
        rows = np.arange(cn.shape[0])
        active = np.zeros(cn.shape[0], dtype=int)
        for j in range(1, k):
            overlap = lo[:, j] <= hi[rows, active]
            hi[rows, active] = np.where(overlap, np.maximum(hi[rows, active], hi[:, j]), hi[rows, active])
            lo[overlap, j] = hi[overlap, j] = 0.0
            active = np.where(overlap, active, j)
        q = max(nodes // _PANELS, 2)
        t, wt = _legendre(q)
        # only windows of positive width contribute
        row, win = np.nonzero(hi > lo)
        if row.size == 0:
            # every label is settled regardless of y
            return out
        width = (hi[row, win] - lo[row, win]) / _PANELS  # (w,)
        starts = lo[row, win][:, None] + width[:, None] * np.arange(_PANELS)  # (w, P)
        eps = (starts + 0.5 * width[:, None])[..., None] + 0.5 * width[:, None, None] * t
        weights = 0.5 * width[:, None, None] * wt * _std_normal_pdf(eps)
        eps = eps.reshape(row.size, -1)
        g = (cn[row][:, None, :] - eps[:, :, None]) / rn[row][:, None, None]
        contrib = np.sum(_categorical_entropy(interval_probs(g)) * weights.reshape(row.size, -1), axis=1)
        out[np.flatnonzero(narrow)] = np.bincount(row, weights=contrib, minlength=cn.shape[0])
    return out


def _label_information(mu, var, noise, b, nodes):
    """I(y_x; class | D, b) for cells cut by thresholds ``b`` (N, k)."""
    mu = np.asarray(mu, dtype=float).ravel()
    var = np.asarray(var, dtype=float).ravel()
    b = np.asarray(b, dtype=float)
    if b.ndim == 1:
        b = np.broadcast_to(b, (mu.size, b.size))
    out = np.zeros(mu.size)
    live = var > 0
    if not np.any(live):
        return out
    mu_l, var_l, b_l = mu[live], var[live], b[live]
    sd = np.sqrt(var_l)
    prior_entropy = _categorical_entropy(interval_probs((b_l - mu_l[:, None]) / sd[:, None]))
    if noise <= 0:
        out[live] = prior_entropy
        return out
    tot_sd = np.sqrt(var_l + noise)
    c = tot_sd[:, None] * (b_l - mu_l[:, None]) / var_l[:, None]
    r = np.sqrt(noise) / sd
    post = _expected_posterior_entropy(c, r, nodes)
    out[live] = np.clip(prior_entropy - post, 0.0, np.log(b.shape[1] + 1))
    return out


def _check_ascending(b):
    b = np.asarray(b, dtype=float)
    if b.ndim == 0:
        b = b.reshape(1)
    if b.shape[-1] > 1 and np.any(np.diff(b, axis=-1) <= 0):
        raise ValueError("threshold vector must be strictly ascending")
    return b


def _shape_like(moments, values):
    return values if np.ndim(moments.mean) else float(values[0])


# -- moments-level criteria --------------------------------------------------

def bes_value(moments: PosteriorMoments, f_threshold, nodes: int = DEFAULT_NODES):
    """Information on the binary label from one noisy observation."""
    thr = np.asarray(f_threshold, dtype=float).reshape(-1, 1)
    vals = _label_information(moments.mean, moments.variance, moments.noise_variance,
                              thr if thr.shape[0] > 1 else thr[0], nodes)
    return _shape_like(moments, vals)


def bes_k_value(moments: PosteriorMoments, b, nodes: int = DEFAULT_NODES):
    """Information on the (k+1)-class label induced by ascending thresholds ``b``."""
    b = _check_ascending(b)
    vals = _label_information(moments.mean, moments.variance, moments.noise_variance, b, nodes)
    return _shape_like(moments, vals)


def em_value(moments: PosteriorMoments, f_threshold):
    """Entropy of the binary label under the current posterior.

    This is the label information of a noiseless observation, so it shares
    that code path exactly.
    """
    thr = np.asarray(f_threshold, dtype=float).reshape(-1, 1)
    vals = _label_information(moments.mean, moments.variance, 0.0,
                              thr if thr.shape[0] > 1 else thr[0], DEFAULT_NODES)
    return _shape_like(moments, vals)


def straddle_value(moments: PosteriorMoments, f_threshold):
    val = STRADDLE_WIDTH * np.sqrt(moments.variance) - np.abs(moments.mean - f_threshold)
    return val if np.ndim(val) else float(val)


def ucb_value(moments: PosteriorMoments, beta: float = 2.0):
    if not beta > 0:
        raise ValueError("beta must be positive")
    val = moments.mean + beta * np.sqrt(moments.variance)
    return val if np.ndim(val) else float(val)


def ei_value(moments: PosteriorMoments, incumbent: float):
    mu = np.asarray(moments.mean, dtype=float)
    sd = np.sqrt(np.asarray(moments.variance, dtype=float))
    safe = np.where(sd > 0, sd, 1.0)
    z = (mu - incumbent) / safe
    val = np.where(sd > 0, safe * (z * ndtr(z) + _std_normal_pdf(z)),
                   np.maximum(mu - incumbent, 0.0))
    val = np.maximum(val, 0.0)
    return val if val.ndim else float(val)


def mes_value(moments: PosteriorMoments, fstar):
    """Truncated-Gaussian max-value entropy search, averaged over ``fstar``."""
    fstar = np.atleast_1d(np.asarray(fstar, dtype=float))
    if fstar.size == 0:
        raise ValueError("empty max-value sample set")
    mu = np.atleast_1d(np.asarray(moments.mean, dtype=float))[:, None]
    sd = np.sqrt(np.atleast_1d(np.asarray(moments.variance, dtype=float)))[:, None]
    z = (fstar[None, :] - mu) / np.maximum(sd, 1e-300)
    log_cdf = log_ndtr(z)
    ratio = np.exp(-0.5 * z * z - 0.5 * np.log(2 * np.pi) - log_cdf)
    terms = np.maximum(z * ratio / 2.0 - log_cdf, 0.0)
    terms = np.where(sd > 0, terms, 0.0)
    return _shape_like(moments, terms.mean(axis=1))


def _averaged(moments, thresholds, nodes):
    """Mean of the label information over a set of threshold vectors (S, k)."""
    thresholds = np.asarray(thresholds, dtype=float)
    mu = np.atleast_1d(np.asarray(moments.mean, dtype=float))
    var = np.atleast_1d(np.asarray(moments.variance, dtype=float))
    S, k = thresholds.shape
    mu_r = np.repeat(mu, S)
    var_r = np.repeat(var, S)
    b = np.tile(thresholds, (mu.size, 1))
    vals = _label_information(mu_r, var_r, moments.noise_variance, b, nodes)
    return _shape_like(moments, vals.reshape(mu.size, S).mean(axis=1))


def _values_of(ts, kind):
    if isinstance(ts, ThresholdSet):
        if kind is not None and ts.kind != kind:
            raise ValueError(f"expected a {kind} threshold set, got {ts.kind}")
        values = ts.values
    else:
        values = np.asarray(ts, dtype=float)
    if np.size(values) == 0:
        raise ValueError("threshold set is empty")
    return np.asarray(values, dtype=float)


# -- model-level criteria ---------------------------------------------------

def bes(gp: GpPosterior, x, f_threshold, quadrature_nodes: int = DEFAULT_NODES):
    return bes_value(_moments(gp, x), f_threshold, quadrature_nodes)


def em(gp: GpPosterior, x, f_threshold):
    return em_value(_moments(gp, x), f_threshold)


def straddle(gp: GpPosterior, x, f_threshold):
    return straddle_value(_moments(gp, x), f_threshold)


def bes_mp(gp: GpPosterior, x, fstar_set, quadrature_nodes: int = DEFAULT_NODES):
    vals = _values_of(fstar_set, "max_value").reshape(-1, 1)
    return _averaged(_moments(gp, x), vals, quadrature_nodes)


def bes_mp_implicit(gp: GpPosterior, x, falpha_set, quadrature_nodes: int = DEFAULT_NODES):
    vals = _values_of(falpha_set, "shifted").reshape(-1, 1)
    return _averaged(_moments(gp, x), vals, quadrature_nodes)


def bes_k(gp: GpPosterior, x, b, quadrature_nodes: int = DEFAULT_NODES):
    return bes_k_value(_moments(gp, x), b, quadrature_nodes)


def bes2_mp(gp: GpPosterior, x, b_set, quadrature_nodes: int = DEFAULT_NODES):
    vals = _values_of(b_set, "stacked")
    if vals.ndim != 2 or vals.shape[1] != 2:
        raise ValueError("stacked thresholds must be pairs")
    _check_ascending(vals)
    return _averaged(_moments(gp, x), vals, quadrature_nodes)


def ucb(gp: GpPosterior, x, beta: float = 2.0):
    return ucb_value(_moments(gp, x), beta)


def ei(gp: GpPosterior, x, incumbent: float):
    return ei_value(_moments(gp, x), incumbent)


def mes(gp: GpPosterior, x, fstar_set):
    return mes_value(_moments(gp, x), _values_of(fstar_set, "max_value"))


def _moments(gp, x):
    x = np.asarray(x, dtype=float)
    m = gp.moments(x)
    if x.ndim <= 1 and m.mean.size == 1:
        return PosteriorMoments(float(m.mean[0]), float(m.variance[0]), m.noise_variance)
    return m


# -- spec-driven construction -------------------------------------------------

@dataclass(frozen=True)
class AcquisitionSpec:
    """Which criterion to use, plus the parameters it needs."""

    criterion: str
    threshold: float | None = None
    thresholds: ThresholdSet | None = None
    beta: float = 2.0
    alpha: float | None = None
    quadrature_nodes: int = DEFAULT_NODES

    def __post_init__(self):
        crit = self.criterion.upper()
        object.__setattr__(self, "criterion", crit)
        if crit not in CRITERIA:
            raise ValueError(f"unknown criterion {self.criterion!r}")
        if crit in ("BES", "EM", "STRDL") and self.threshold is None:
            raise ValueError(f"{crit} needs a scalar threshold")
        if crit == "UCB" and not self.beta > 0:
            raise ValueError("UCB needs beta > 0")
        if crit in ("BES_MP", "BES_MP_IMPLICIT", "BES2_MP", "BESK", "MES") and self.thresholds is not None:
            want = {
                "BES_MP": "max_value", "MES": "max_value",
                "BES_MP_IMPLICIT": "shifted", "BES2_MP": "stacked", "BESK": "stacked",
            }[crit]
            if self.thresholds.kind != want:
                raise ValueError(f"{crit} needs a {want} threshold set")


def make_criterion(spec: AcquisitionSpec, gp: GpPosterior,
                   incumbent: float | None = None) -> Callable[[np.ndarray], np.ndarray]:
    """Close over the posterior: returns ``f(X) -> values`` for X of shape (N, d)."""
    crit = spec.criterion
    nodes = spec.quadrature_nodes

    def needs_set():
        if spec.thresholds is None:
            raise ValueError(f"{crit} needs a threshold set")
        return spec.thresholds

    if crit == "BES":
        fn = lambda m: bes_value(m, spec.threshold, nodes)
    elif crit == "EM":
        fn = lambda m: em_value(m, spec.threshold)
    elif crit == "STRDL":
        fn = lambda m: straddle_value(m, spec.threshold)
    elif crit in ("BES_MP", "BES_MP_IMPLICIT"):
        vals = _values_of(needs_set(), None).reshape(-1, 1)
        fn = lambda m: _averaged(m, vals, nodes)
    elif crit in ("BES2_MP", "BESK"):
        vals = _check_ascending(_values_of(needs_set(), None))
        fn = lambda m: _averaged(m, vals, nodes)
    elif crit == "UCB":
        fn = lambda m: ucb_value(m, spec.beta)
    elif crit == "EI":
        if incumbent is None:
            raise ValueError("EI needs an incumbent value")
        fn = lambda m: ei_value(m, incumbent)
    else:  # MES
        vals = _values_of(needs_set(), None)
        fn = lambda m: mes_value(m, vals)

    def criterion(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.asarray(fn(gp.moments(X)), dtype=float).reshape(-1)

    return criterion
