"""Multi-view generative-discriminative network.

Each view has a probabilistic encoder q(z_v | x_v) and a decoder p(x_v | z).
Present-view posteriors are fused by a product of experts with the standard
prior, and a predictor head maps the fused latent to class probabilities.
"""
from __future__ import absolute_import, division

from dataclasses import asdict, dataclass, field
import logging
import math

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from mvsemi.dataset import Batch
from mvsemi.gaussian import LOG_2PI, DiagGaussian, poe_fuse_masked, reparam_sample, standard_prior
from mvsemi.helpers import torch_dtype

logger = logging.getLogger(__name__)

ENCODER_FAMILIES = ("mlp", "conv")
PREDICT_MODES = ("posterior-mean", "monte-carlo")
IMPUTE_MODES = ("mean", "sample")


@dataclass
class ModelConfig(object):

    latent_dim: int = 32
    encoder_hidden: list = field(default_factory=lambda: [128, 128])
    decoder_hidden: list = field(default_factory=lambda: [128, 128])
    predictor_hidden: list = field(default_factory=lambda: [128])
    conv_channels: list = field(default_factory=lambda: [32, 64])
    beta: float = 0.1
    gamma: float = 1.0
    alpha: float = 1.0
    temperature: float = 1.0
    encoder_family: str = "mlp"
    unsup_on_labeled: bool = True
    view_kl_in_unsup: bool = False
    allow_prior_only: bool = False
    dtype: str = "float64"
    seed: int = 0

    def validate(self):
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be at least 1")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.gamma < 0 or self.alpha < 0:
            raise ValueError("gamma and alpha must be non-negative")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.encoder_family not in ENCODER_FAMILIES:
            raise ValueError("encoder_family must be one of {}".format(ENCODER_FAMILIES))
        for name in ("encoder_hidden", "decoder_hidden", "predictor_hidden", "conv_channels"):
            if any(int(w) < 1 for w in getattr(self, name)):
                raise ValueError("{} widths must be positive".format(name))
        if self.encoder_family == "conv" and len(self.conv_channels) != 2:
            raise ValueError("conv_channels needs exactly two widths")
        torch_dtype(self.dtype)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, payload):
        return cls(**payload)


def _mlp(sizes):
    layers = []
    for n, (width_in, width_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        layers.append(nn.Linear(width_in, width_out))
        if n < len(sizes) - 2:
            layers.append(nn.SiLU())
    return nn.Sequential(*layers)


class MLPNet(nn.Module):

    """Flattens a view and maps it through an MLP to ``out_dim`` outputs."""

    def __init__(self, view_shape, hidden, out_dim):
        super(MLPNet, self).__init__()
        self.net = _mlp([int(np.prod(view_shape))] + list(hidden) + [out_dim])

    def forward(self, x):
        return self.net(x.reshape(x.shape[0], -1))


class MLPDecoder(nn.Module):

    def __init__(self, view_shape, hidden, latent_dim):
        super(MLPDecoder, self).__init__()
        self.view_shape = tuple(view_shape)
        self.net = _mlp([latent_dim] + list(hidden) + [int(np.prod(view_shape))])

    def forward(self, z):
        return self.net(z).reshape((z.shape[0],) + self.view_shape)


def _halved(n, times=2):
    for _ in range(times):
        n = int(math.ceil(n / 2.0))
    return n


class ConvNet(nn.Module):

    """Two stride-2 convolutions over a channels-last image view, then an MLP head."""

    def __init__(self, view_shape, hidden, out_dim, channels):
        super(ConvNet, self).__init__()
        height, width, depth = view_shape
        c1, c2 = channels
        self.conv = nn.Sequential(
            nn.Conv2d(depth, c1, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(c1, c2, 3, stride=2, padding=1), nn.SiLU(),
            nn.Flatten(),
        )
        flat = c2 * _halved(height) * _halved(width)
        self.head = _mlp([flat] + list(hidden[-1:]) + [out_dim])

    def forward(self, x):
        return self.head(self.conv(x.permute(0, 3, 1, 2)))


def view_network(schema, v, config, out_dim):
    """MLP for flat views; conv stack for image views when the config asks for it."""
    shape = schema.view_shapes[v]
    if schema.is_image(v) and config.encoder_family == "conv":
        return ConvNet(shape, config.encoder_hidden, out_dim, config.conv_channels)
    return MLPNet(shape, config.encoder_hidden, out_dim)


class ConvDecoder(nn.Module):

    def __init__(self, view_shape, hidden, latent_dim, channels):
        super(ConvDecoder, self).__init__()
        self.view_shape = tuple(view_shape)
        height, width, depth = view_shape
        c1, c2 = channels
        self.grid = (c2, int(math.ceil(height / 4.0)), int(math.ceil(width / 4.0)))
        self.fc = nn.Sequential(nn.Linear(latent_dim, int(np.prod(self.grid))), nn.SiLU())
        self.deconv = nn.Sequential(
            nn.ConvTranspose2d(c2, c1, 4, stride=2, padding=1), nn.SiLU(),
            nn.ConvTranspose2d(c1, depth, 4, stride=2, padding=1),
        )

    def forward(self, z):
        height, width, _ = self.view_shape
        h = self.fc(z).reshape((z.shape[0],) + self.grid)
        out = self.deconv(h)[:, :, :height, :width]
        return out.permute(0, 2, 3, 1)


class MultiViewModel(nn.Module):

    """Per-view encoders and decoders around a product-of-experts latent."""

    def __init__(self, schema, config=None):
        super(MultiViewModel, self).__init__()
        config = config or ModelConfig()
        config.validate()
        self.schema = schema
        self.config = config
        D = config.latent_dim
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(config.seed)
            encoders, decoders = [], []
            for v, shape in enumerate(schema.view_shapes):
                encoders.append(view_network(schema, v, config, 2 * D))
                if schema.is_image(v) and config.encoder_family == "conv":
                    decoders.append(ConvDecoder(shape, config.decoder_hidden, D, config.conv_channels))
                else:
                    decoders.append(MLPDecoder(shape, config.decoder_hidden, D))
            self.encoders = nn.ModuleList(encoders)
            self.decoders = nn.ModuleList(decoders)
            self.predictor = _mlp([D] + list(config.predictor_hidden) + [schema.num_classes])
        self.to(torch_dtype(config.dtype))
        logger.debug("Built %d-view model with %d parameters",
                     schema.num_views, sum(p.numel() for p in self.parameters()))

    @property
    def dtype(self):
        return torch_dtype(self.config.dtype)

    @property
    def latent_dim(self):
        return self.config.latent_dim

    def parameter_groups(self):
        return {
            "encoder": [list(e.parameters()) for e in self.encoders],
            "decoder": [list(d.parameters()) for d in self.decoders],
            "predictor": list(self.predictor.parameters()),
        }

    # -- encoding and fusion

    def _view_input(self, v, x):
        x = torch.as_tensor(x, dtype=self.dtype)
        shape = self.schema.view_shapes[v]
        if tuple(x.shape) == shape:
            return x.unsqueeze(0), True
        if tuple(x.shape[1:]) != shape:
            raise ValueError("View {} input has shape {}, expected (B,) + {}".format(
                v, tuple(x.shape), shape))
        return x, False

    def encode_view(self, v, x_v):
        x, single = self._view_input(v, x_v)
        mean, log_variance = self.encoders[v](x).chunk(2, dim=-1)
        if single:
            mean, log_variance = mean[0], log_variance[0]
        return DiagGaussian(mean, log_variance, validate=False)

    def encode(self, batch):
        """Per-view posteriors over the whole batch.

        Only rows where a view is present pass through its encoder; absent
        rows hold N(0, I) placeholders that fusion ignores.
        """
        B, D = len(batch), self.latent_dim
        posteriors = []
        for v in range(self.schema.num_views):
            rows = batch.present[:, v].nonzero(as_tuple=True)[0]
            mean = torch.zeros((B, D), dtype=self.dtype)
            log_variance = torch.zeros((B, D), dtype=self.dtype)
            if rows.numel():
                q = self.encode_view(v, batch.views[v][rows])
                mean = mean.index_copy(0, rows, q.mean)
                log_variance = log_variance.index_copy(0, rows, q.log_variance)
            posteriors.append(DiagGaussian(mean, log_variance, validate=False))
        return posteriors

    def fuse_present(self, posteriors, mask):
        """Product of experts over present views and the standard prior."""
        mask = torch.as_tensor(mask, dtype=torch.bool)
        single = mask.dim() == 1
        if single:
            mask = mask.unsqueeze(0)
            posteriors = [DiagGaussian(q.mean.unsqueeze(0), q.log_variance.unsqueeze(0), validate=False)
                          for q in posteriors]
        if len(posteriors) != mask.shape[1]:
            raise ValueError("{} posteriors for a mask over {} views".format(len(posteriors), mask.shape[1]))
        if not self.config.allow_prior_only and not mask.any(dim=1).all():
            raise ValueError("Every sample needs at least one present view.")
        means = torch.stack([q.mean for q in posteriors])
        log_variances = torch.stack([q.log_variance for q in posteriors])
        prior = standard_prior(self.latent_dim, dtype=means.dtype)
        fused = poe_fuse_masked(means, log_variances, mask.t(), prior)
        return fused[0] if single else fused

    def posterior(self, batch):
        posteriors = self.encode(batch)
        return posteriors, self.fuse_present(posteriors, batch.present)

    # -- decoding and prediction

    def decode_raw(self, v, z):
        """Decoder output before squashing: means (gaussian) or logits (bernoulli)."""
        z = torch.as_tensor(z, dtype=self.dtype)
        if z.shape[-1] != self.latent_dim:
            raise ValueError("Latent has dimension {}, expected {}".format(z.shape[-1], self.latent_dim))
        single = z.dim() == 1
        out = self.decoders[v](z.unsqueeze(0) if single else z)
        return out[0] if single else out

    def decode_view(self, v, z):
        raw = self.decode_raw(v, z)
        if self.schema.view_likelihood[v] == "bernoulli":
            eps = torch.finfo(raw.dtype).eps
            return torch.sigmoid(raw).clamp(eps, 1 - eps)
        return raw

    def view_log_likelihood(self, v, raw, x):
        """log p(x_v | z) per sample, summed over the view's features."""
        x = torch.as_tensor(x, dtype=raw.dtype)
        if self.schema.view_likelihood[v] == "bernoulli":
            nll = F.binary_cross_entropy_with_logits(raw, x, reduction="none")
            return -nll.reshape(nll.shape[0], -1).sum(dim=1)
        sq = (x - raw).pow(2) + LOG_2PI
        return -0.5 * sq.reshape(sq.shape[0], -1).sum(dim=1)

    def predict_logits(self, z):
        z = torch.as_tensor(z, dtype=self.dtype)
        if z.shape[-1] != self.latent_dim:
            raise ValueError("Latent has dimension {}, expected {}".format(z.shape[-1], self.latent_dim))
        return self.predictor(z)

    def predict(self, z):
        return torch.softmax(self.predict_logits(z), dim=-1)

    def predict_proba(self, batch, mode="posterior-mean", k=1, generator=None):
        """(B, |Y|) class probabilities for a batch of samples."""
        if mode not in PREDICT_MODES:
            raise ValueError("mode must be one of {}".format(PREDICT_MODES))
        with torch.no_grad():
            _, fused = self.posterior(batch)
            if mode == "posterior-mean":
                return self.predict(fused.mean)
            if k < 1:
                raise ValueError("monte-carlo mode needs k >= 1")
            total = torch.zeros((len(batch), self.schema.num_classes), dtype=self.dtype)
            for _ in range(k):
                noise = torch.randn(fused.mean.shape, generator=generator, dtype=self.dtype)
                total = total + self.predict(reparam_sample(fused, noise))
            return total / k

    def predict_sample(self, sample, mode="posterior-mean", k=1, noise=None, generator=None):
        """Class probability vector for one MultiViewSample.

        ``noise`` of shape (k, D) pins the monte-carlo draws.
        """
        if sample.num_present < 1:
            raise ValueError("Sample {} has no present view.".format(sample.sample_id))
        batch = Batch.from_samples([sample], self.schema, dtype=self.dtype)
        if mode == "monte-carlo" and noise is not None:
            noise = torch.as_tensor(noise, dtype=self.dtype).reshape(-1, self.latent_dim)
            with torch.no_grad():
                _, fused = self.posterior(batch)
                probs = torch.stack([self.predict(reparam_sample(fused[0], eps)) for eps in noise])
            return probs.mean(dim=0).numpy()
        return self.predict_proba(batch, mode=mode, k=k, generator=generator)[0].numpy()

    # -- imputation

    def impute_batch(self, batch, mode="mean", generator=None):
        """Per-view tensors with absent rows replaced by decoded reconstructions."""
        if mode not in IMPUTE_MODES:
            raise ValueError("mode must be one of {}".format(IMPUTE_MODES))
        with torch.no_grad():
            _, fused = self.posterior(batch)
            z = fused.mean
            if mode == "sample":
                z = reparam_sample(fused, torch.randn(z.shape, generator=generator, dtype=self.dtype))
            views = []
            for v in range(self.schema.num_views):
                x = torch.as_tensor(batch.views[v], dtype=self.dtype)
                absent = ~batch.present[:, v]
                if absent.any():
                    x = x.clone()
                    x[absent] = self.decode_view(v, z[absent])
                views.append(x)
        return views

    def impute_missing(self, sample, mode="mean", generator=None):
        """Decoded arrays for each absent view of ``sample``, keyed by view index."""
        if sample.num_present < 1:
            raise ValueError("Sample {} has no present view.".format(sample.sample_id))
        absent = [v for v, x in enumerate(sample.views) if x is None]
        if not absent:
            return {}
        batch = Batch.from_samples([sample], self.schema, dtype=self.dtype)
        views = self.impute_batch(batch, mode=mode, generator=generator)
        return {v: views[v][0].numpy() for v in absent}

    # -- checkpoint support

    def config_dict(self):
        return {"model": self.config.to_dict()}

    @classmethod
    def from_config_dict(cls, schema, payload):
        return cls(schema, ModelConfig.from_dict(payload["model"]))


def predict_dataset(predictor, dataset, batch_size=1024, **kwargs):
    """(n, |Y|) numpy probabilities from any predictor exposing ``predict_proba``."""
    if not len(dataset):
        raise ValueError("Cannot predict on an empty dataset.")
    full = dataset.to_batch(dtype=predictor.dtype)
    chunks = []
    for start in range(0, len(dataset), batch_size):
        idx = torch.arange(start, min(start + batch_size, len(dataset)))
        chunks.append(predictor.predict_proba(full.index(idx), **kwargs).detach().cpu().numpy())
    return np.concatenate(chunks, axis=0)
