"""Independent numerical oracles shared by the tests.

Nothing here calls into the package: the routes are plain tensor-product
quadrature and Monte Carlo built on scipy.stats.
"""
import numpy as np
from scipy.stats import norm


def _composite_gl(breaks, per_panel):
    t, w = np.polynomial.legendre.leggauss(per_panel)
    a, b = breaks[:-1, None], breaks[1:, None]
    x = 0.5 * (a + b) + 0.5 * (b - a) * t
    wx = 0.5 * (b - a) * w
    return x.ravel(), wx.ravel()


def _panels(lo, hi, width, extra=()):
    n = max(int(np.ceil((hi - lo) / width)), 1)
    pts = np.concatenate([np.linspace(lo, hi, n + 1), [e for e in extra if lo < e < hi]])
    return np.unique(pts)


def joint_mutual_information(mu, var, noise, thresholds):
    """I(y; (class, b)) with b uniform over the rows of ``thresholds`` (S, k).

    Builds the joint density p(y, class, b) by integrating the Gaussian
    prior on f against the Gaussian observation likelihood cell by cell, then
    integrates p log p/(p(y) p(class, b)) over y.  Needs noise > 0.
    """
    thresholds = np.atleast_2d(np.asarray(thresholds, dtype=float))
    S, k = thresholds.shape
    sx, sn = np.sqrt(var), np.sqrt(noise)
    st = np.sqrt(var + noise)
    # f grid: panels no wider than half the noise scale, split at every threshold
    f_lo, f_hi = mu - 12 * sx, mu + 12 * sx
    f_breaks = _panels(f_lo, f_hi, min(sn, sx) / 2, thresholds.ravel())
    f, wf = _composite_gl(f_breaks, 8)
    # y grid: split near the observation values that straddle each threshold
    y_lo, y_hi = mu - 12 * st, mu + 12 * st
    shift = ((var + noise) * thresholds.ravel() - noise * mu) / var
    y_breaks = _panels(y_lo, y_hi, min(sn * st / sx, st) / 2, shift)
    y, wy = _composite_gl(y_breaks, 8)
    prior_f = norm.pdf(f, mu, sx) * wf
    like = norm.pdf(y[:, None], f[None, :], sn)  # (Ny, Nf)
    joint = []  # p(y, class, b) for every (b, class)
    for b in thresholds:
        cell = np.searchsorted(b, f, side="right")  # 0..k; f >= b_j goes above
        for j in range(k + 1):
            joint.append(like @ (prior_f * (cell == j)) / S)
    joint = np.array(joint)  # (S*(k+1), Ny)
    p_y = joint.sum(axis=0)
    p_cb = joint @ wy
    with np.errstate(divide="ignore", invalid="ignore"):
        term = joint * np.log(joint / (p_y[None, :] * p_cb[:, None]))
    term = np.where(joint > 0, term, 0.0)
    return float(np.sum(term @ wy))


def mc_label_information(mu, var, noise, b, n=200_000, seed=0):
    """Monte-Carlo mean and standard error of E_y[KL(p(class|y) || p(class))].

    Class probabilities are CDF differences of the Gaussian prior on f and
    of the Gaussian posterior of f given a single extra observation y.
    """
    b = np.atleast_1d(np.asarray(b, dtype=float))
    rng = np.random.default_rng(seed)
    st2 = var + noise
    y = mu + np.sqrt(st2) * rng.standard_normal(n)
    edges = np.concatenate([[-np.inf], b, [np.inf]])
    prior = np.diff(norm.cdf(edges, mu, np.sqrt(var)))
    post_mean = (var * y + noise * mu) / st2
    post_sd = np.sqrt(var * noise / st2)
    cdf = norm.cdf((edges[None, :] - post_mean[:, None]) / post_sd)
    post = np.diff(cdf, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        kl = np.where(post > 0, post * np.log(post / prior[None, :]), 0.0).sum(axis=1)
    return float(kl.mean()), float(kl.std(ddof=1) / np.sqrt(n))


def mc_joint_information(mu, var, noise, b, n=200_000, seed=0):
    """Monte-Carlo estimate of I(y; class) from joint draws of (f, y).

    Uses E[log p(class | y) - log p(class)] with the class read off the
    sampled f, so it never evaluates the expectation in closed form.
    """
    b = np.atleast_1d(np.asarray(b, dtype=float))
    rng = np.random.default_rng(seed)
    f = mu + np.sqrt(var) * rng.standard_normal(n)
    y = f + np.sqrt(noise) * rng.standard_normal(n)
    cls = np.searchsorted(b, f, side="right")
    edges = np.concatenate([[-np.inf], b, [np.inf]])
    prior = np.diff(norm.cdf(edges, mu, np.sqrt(var)))
    st2 = var + noise
    pm = (var * y + noise * mu) / st2
    ps = np.sqrt(var * noise / st2)
    lo = norm.cdf((edges[cls] - pm) / ps)
    hi = norm.cdf((edges[cls + 1] - pm) / ps)
    vals = np.log(np.maximum(hi - lo, 1e-300)) - np.log(prior[cls])
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n))
