"""Closed-form arithmetic on diagonal Gaussians.

All distributions carry a trailing latent axis of length D; leading axes are
batch axes. Reductions over the latent axis are sums.
"""
from __future__ import absolute_import, division

import math

import torch

LOG_VARIANCE_MIN = -10.0
LOG_VARIANCE_MAX = 10.0
LOG_2PI = math.log(2 * math.pi)


class DiagGaussian(object):

    """Diagonal Gaussian parameterised by mean and log-variance.

    The log-variance is clamped to [LOG_VARIANCE_MIN, LOG_VARIANCE_MAX] on
    construction so precisions stay finite under product-of-experts fusion.
    """

    def __init__(self, mean, log_variance, validate=True):
        mean = _as_float_tensor(mean)
        log_variance = _as_float_tensor(log_variance, like=mean)
        if mean.shape != log_variance.shape:
            raise ValueError(
                "Mean and log-variance shapes differ: {} vs {}".format(
                    tuple(mean.shape), tuple(log_variance.shape)))
        if mean.dim() == 0 or mean.shape[-1] < 1:
            raise ValueError("Latent dimension must be at least 1.")
        if validate and not (torch.isfinite(mean).all() and torch.isfinite(log_variance).all()):
            raise ValueError("DiagGaussian parameters must be finite.")
        self._mean = mean
        self._log_variance = log_variance.clamp(LOG_VARIANCE_MIN, LOG_VARIANCE_MAX)

    @property
    def mean(self):
        return self._mean

    @property
    def log_variance(self):
        return self._log_variance

    @property
    def variance(self):
        return self._log_variance.exp()

    @property
    def precision(self):
        return (-self._log_variance).exp()

    @property
    def dim(self):
        return self._mean.shape[-1]

    @property
    def batch_shape(self):
        return tuple(self._mean.shape[:-1])

    def __getitem__(self, index):
        mean = self._mean[index]
        if mean.dim() == 0:
            raise IndexError("Indexing must keep the latent axis.")
        return DiagGaussian(mean, self._log_variance[index], validate=False)

    def detach(self):
        return DiagGaussian(self._mean.detach(), self._log_variance.detach(), validate=False)

    def __repr__(self):
        return "DiagGaussian(batch_shape={}, dim={})".format(self.batch_shape, self.dim)


def _as_float_tensor(value, like=None):
    tensor = torch.as_tensor(value)
    if like is not None:
        return tensor.to(dtype=like.dtype, device=like.device)
    if not tensor.is_floating_point():
        tensor = tensor.to(torch.float64)
    return tensor


def standard_prior(dim, batch_shape=(), dtype=torch.float64):
    """N(0, I) in ``dim`` dimensions."""
    if int(dim) < 1:
        raise ValueError("Prior dimension must be at least 1, got {}".format(dim))
    shape = tuple(batch_shape) + (int(dim),)
    zeros = torch.zeros(shape, dtype=dtype)
    return DiagGaussian(zeros, torch.zeros(shape, dtype=dtype), validate=False)


def kl_to_standard(q):
    """KL(q || N(0, I)), summed over the latent axis."""
    lv = q.log_variance
    return 0.5 * (q.mean.pow(2) + lv.exp() - 1.0 - lv).sum(dim=-1)


def reparam_sample(q, noise):
    noise = torch.as_tensor(noise, dtype=q.mean.dtype)
    if noise.shape != q.mean.shape:
        raise ValueError(
            "Noise shape {} does not match distribution shape {}".format(
                tuple(noise.shape), tuple(q.mean.shape)))
    return q.mean + (0.5 * q.log_variance).exp() * noise


def log_density(q, x):
    """Exact log-density of ``x`` under ``q``, summed over the latent axis."""
    x = torch.as_tensor(x, dtype=q.mean.dtype)
    if x.shape[-1:] != q.mean.shape[-1:]:
        raise ValueError(
            "Point dimension {} does not match distribution dimension {}".format(
                x.shape[-1] if x.dim() else 0, q.dim))
    lv = q.log_variance
    return -0.5 * (LOG_2PI + lv + (x - q.mean).pow(2) * (-lv).exp()).sum(dim=-1)


def poe_fuse(experts, prior):
    """Product of Gaussian experts with the prior always included.

    Precisions add; the fused mean is the precision-weighted mean.
    """
    for expert in experts:
        if expert.mean.shape[-1] != prior.dim:
            raise ValueError(
                "Expert dimension {} does not match prior dimension {}".format(
                    expert.dim, prior.dim))
    if not experts:
        return DiagGaussian(prior.mean, prior.log_variance, validate=False)
    precision = prior.precision
    weighted = prior.precision * prior.mean
    for expert in experts:
        precision = precision + expert.precision
        weighted = weighted + expert.precision * expert.mean
    return DiagGaussian(weighted / precision, -precision.log(), validate=False)


def poe_fuse_masked(means, log_variances, mask, prior=None):
    """Batched product of experts over a view axis.

    ``means``/``log_variances`` have shape (V, B, D) and ``mask`` shape (V, B).
    Absent experts contribute zero precision, so their parameters never reach
    the result or its gradient.
    """
    means = torch.as_tensor(means)
    log_variances = torch.as_tensor(log_variances, dtype=means.dtype)
    if means.shape != log_variances.shape or means.dim() != 3:
        raise ValueError("Expected (V, B, D) means and log-variances.")
    mask = torch.as_tensor(mask, dtype=torch.bool)
    if mask.shape != means.shape[:2]:
        raise ValueError(
            "Mask shape {} does not match (V, B) = {}".format(
                tuple(mask.shape), tuple(means.shape[:2])))
    if prior is None:
        prior = standard_prior(means.shape[-1], dtype=means.dtype)
    log_variances = log_variances.clamp(LOG_VARIANCE_MIN, LOG_VARIANCE_MAX)
    zero = torch.zeros((), dtype=means.dtype)
    expert_precision = torch.where(mask.unsqueeze(-1), (-log_variances).exp(), zero)
    expert_weighted = torch.where(mask.unsqueeze(-1), expert_precision * means, zero)
    precision = prior.precision + expert_precision.sum(dim=0)
    weighted = prior.precision * prior.mean + expert_weighted.sum(dim=0)
    return DiagGaussian(weighted / precision, -precision.log(), validate=False)
