"""Brute-force reference computations for the test suite.

Nothing here imports from the package; distributions are plain
(mean, variance) pairs of numpy values.
"""
from __future__ import absolute_import, division

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.integrate import trapezoid
from scipy.stats import norm

QUADRATURE_TOLERANCE = 1e-8


def _gaussian_log_factor(x, mean, variance):
    return -0.5 * (x - mean) ** 2 / variance


def oracle_poe_grid(experts, prior, grid_bounds=(-10.0, 10.0), grid_points=200001):
    """Mean and variance of the normalized density product on a 1-D grid.

    ``experts`` is a list of (mean, variance) pairs and ``prior`` one pair.
    Raises ValueError when the grid cannot resolve the product.
    """
    lo, hi = float(grid_bounds[0]), float(grid_bounds[1])
    factors = [tuple(float(a) for a in e) for e in experts] + [tuple(float(a) for a in prior)]
    for mean, variance in factors:
        if variance <= 0:
            raise ValueError("variances must be positive")
        if mean - 8 * np.sqrt(variance) < lo or mean + 8 * np.sqrt(variance) > hi:
            raise ValueError("grid does not cover 8 standard deviations of every factor")
    x = np.linspace(lo, hi, int(grid_points))

    # narrowest width the product can reach
    sigma = np.sqrt(min(v for _, v in factors) / len(factors))
    center = 0.5 * (lo + hi)
    if center - 8 * sigma < lo or center + 8 * sigma > hi:
        raise ValueError("grid is too small for the narrowest factor")
    residual = abs(trapezoid(norm.pdf(x, loc=center, scale=sigma), x) - 1.0)
    if residual > QUADRATURE_TOLERANCE:
        raise ValueError("grid too coarse: quadrature residual {:.3g}".format(residual))

    log_product = np.zeros_like(x)
    for mean, variance in factors:
        log_product += _gaussian_log_factor(x, mean, variance)
    weights = np.exp(log_product - log_product.max())
    mass = trapezoid(weights, x)
    mean = trapezoid(x * weights, x) / mass
    variance = trapezoid((x - mean) ** 2 * weights, x) / mass
    return float(mean), float(variance)


def oracle_kl_mc(q, p, n_samples=10 ** 6, seed=0):
    """Monte Carlo estimate of KL(q || p) and its standard error.

    ``q`` and ``p`` are (mean, variance) pairs of equal-length vectors.
    """
    if n_samples < 10 ** 4:
        raise ValueError("n_samples must be at least 10^4")
    q_mean, q_var = (np.atleast_1d(np.asarray(a, dtype=np.float64)) for a in q)
    p_mean, p_var = (np.atleast_1d(np.asarray(a, dtype=np.float64)) for a in p)
    rng = np.random.default_rng(seed)
    z = q_mean + np.sqrt(q_var) * rng.standard_normal((int(n_samples), len(q_mean)))
    log_ratio = (norm.logpdf(z, loc=q_mean, scale=np.sqrt(q_var))
                 - norm.logpdf(z, loc=p_mean, scale=np.sqrt(p_var))).sum(axis=1)
    return float(log_ratio.mean()), float(log_ratio.std(ddof=1) / np.sqrt(len(log_ratio)))


def oracle_auroc_pairs(scores, labels):
    """Fraction of positive-negative pairs ranked correctly, ties counting 0.5."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    positive, negative = scores[labels], scores[~labels]
    wins = 0.0
    for s in positive:
        for t in negative:
            if s > t:
                wins += 1.0
            elif s == t:
                wins += 0.5
    return wins / (len(positive) * len(negative))


def _ncc(windows, template):
    t = template - template.mean()
    w = windows - windows.mean(axis=(-2, -1), keepdims=True)
    denominator = np.sqrt((w ** 2).sum(axis=(-2, -1)) * (t ** 2).sum())
    with np.errstate(invalid="ignore", divide="ignore"):
        score = (w * t).sum(axis=(-2, -1)) / denominator
    return np.where(denominator > 0, score, -np.inf)


def oracle_glyph_classifier(image, glyphs):
    """Class whose glyph has the best normalized cross-correlation at any position."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3:
        image = image[:, :, 0]
    best_class, best_score = 0, -np.inf
    for c, glyph in enumerate(glyphs):
        glyph = np.asarray(glyph, dtype=np.float64)
        score = _ncc(sliding_window_view(image, glyph.shape), glyph).max()
        if score > best_score:
            best_class, best_score = c, score
    return best_class
