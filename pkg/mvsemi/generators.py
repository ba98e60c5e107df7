"""Synthetic multi-view datasets.

``gen_tabular`` stands in for preprocessed multi-omics feature matrices and
``gen_glyph_images`` for a multi-view digit image benchmark. Both are
deterministic functions of their config: every sample draws from its own
numpy stream derived from ``(seed, sample_id)``.
"""
from __future__ import absolute_import, division

from dataclasses import asdict, dataclass, replace
import logging
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.optimize import minimize
from scipy.special import logsumexp

from mvsemi.dataset import Dataset, DatasetSchema, MultiViewSample
from mvsemi.helpers import derived_rng

logger = logging.getLogger(__name__)

KINDS = ("tabular", "glyph")

# stream tags for derived_rng(seed, tag, ...)
_GLOBAL_STREAM = 0
_SAMPLE_STREAM = 1
_GLYPH_STREAM = 2
_BACKGROUND_STREAM = 3

_DEFAULTS = {
    "tabular": dict(n_train=10000, n_val=2500, n_test=3000, num_views=4, num_classes=2),
    "glyph": dict(n_train=20000, n_val=2500, n_test=5000, num_views=5, num_classes=10),
}


@dataclass
class GeneratorConfig(object):

    kind: str = "tabular"
    n_train: int = None
    n_val: int = None
    n_test: int = None
    num_views: int = None
    num_classes: int = None
    shared_dim: int = 16
    view_dims: list = None
    shared_std: float = 1.0
    private_noise_std: float = 1.0
    class_separation: float = 2.5
    nonlinearity: str = "tanh"
    image_side: int = 14
    glyph_side: int = 7
    glyph_min_distance: int = 10
    overlay: bool = True
    glyph_dir: str = None
    seed: int = 0

    def resolved(self):
        """Copy with kind-specific defaults filled in and checked."""
        if self.kind not in KINDS:
            raise ValueError("Unknown generator kind {!r}; use one of {}".format(self.kind, KINDS))
        filled = {k: v for k, v in _DEFAULTS[self.kind].items() if getattr(self, k) is None}
        config = replace(self, **filled)
        if config.kind == "tabular" and config.view_dims is None:
            config = replace(config, view_dims=[100] * config.num_views)
        config.validate()
        return config

    def validate(self):
        for name in ("n_train", "n_val", "n_test", "shared_dim", "image_side", "glyph_side"):
            if getattr(self, name) < 1:
                raise ValueError("{} must be at least 1".format(name))
        if self.num_views < 2:
            raise ValueError("num_views must be at least 2")
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        if self.private_noise_std < 0 or self.shared_std <= 0:
            raise ValueError("Noise standard deviations must be non-negative (shared_std > 0).")
        if self.nonlinearity not in ("tanh", "linear"):
            raise ValueError("nonlinearity must be 'tanh' or 'linear'")
        if self.kind == "tabular":
            if len(self.view_dims) != self.num_views or min(self.view_dims) < 1:
                raise ValueError("view_dims needs one positive width per view")
        elif self.glyph_side > self.image_side:
            raise ValueError("glyph_side cannot exceed image_side")

    def to_dict(self):
        return asdict(self)


def _split_ids(config):
    bounds = np.cumsum([0, config.n_train, config.n_val, config.n_test])
    return {tag: range(bounds[i], bounds[i + 1]) for i, tag in enumerate(("train", "val", "test"))}


def _triplet(schema, config, make_sample, metadata):
    datasets = []
    for tag, ids in _split_ids(config).items():
        samples = [make_sample(sample_id) for sample_id in ids]
        datasets.append(Dataset(schema, samples, split_tag=tag, metadata=metadata))
        logger.debug("Generated %d %s samples", len(samples), tag)
    return tuple(datasets)


# ---------------------------------------------------------------- tabular

def tabular_parameters(config):
    """Class means and per-view mixing matrices, fixed by the seed."""
    rng = derived_rng(config.seed, _GLOBAL_STREAM)
    directions = rng.standard_normal((config.num_classes, config.shared_dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    class_means = config.class_separation * directions
    mixing = [rng.standard_normal((d, config.shared_dim)) / np.sqrt(config.shared_dim)
              for d in config.view_dims]
    return class_means, mixing


def gen_tabular(config=None):
    """Return (train, val, test) tabular datasets with labels on every sample."""
    config = (config or GeneratorConfig(kind="tabular")).resolved()
    if config.kind != "tabular":
        raise ValueError("gen_tabular needs a tabular config")
    class_means, mixing = tabular_parameters(config)
    squash = np.tanh if config.nonlinearity == "tanh" else (lambda a: a)
    schema = DatasetSchema(
        view_shapes=tuple((d,) for d in config.view_dims),
        num_classes=config.num_classes,
        view_likelihood=("gaussian",) * config.num_views,
    )

    def make_sample(sample_id):
        rng = derived_rng(config.seed, _SAMPLE_STREAM, sample_id)
        label = int(rng.integers(config.num_classes))
        shared = class_means[label] + config.shared_std * rng.standard_normal(config.shared_dim)
        views = []
        for A in mixing:
            noise = config.private_noise_std * rng.standard_normal(A.shape[0])
            views.append(squash(A @ shared) + noise)
        return MultiViewSample(views, label=label, sample_id=sample_id)

    metadata = {"generator": config.to_dict()}
    return _triplet(schema, config, make_sample, metadata)


def _fit_logistic(features, labels, num_classes, l2=1e-3):
    n, d = features.shape
    onehot = np.eye(num_classes)[labels]

    def objective(flat):
        W = flat[:d * num_classes].reshape(d, num_classes)
        b = flat[d * num_classes:]
        logits = features @ W + b
        log_prob = logits - logsumexp(logits, axis=1, keepdims=True)
        loss = -(onehot * log_prob).sum() / n + 0.5 * l2 * (W ** 2).sum()
        residual = (np.exp(log_prob) - onehot) / n
        grad_W = features.T @ residual + l2 * W
        grad_b = residual.sum(axis=0)
        return loss, np.concatenate([grad_W.ravel(), grad_b])

    x0 = np.zeros(d * num_classes + num_classes)
    result = minimize(objective, x0, jac=True, method="L-BFGS-B", options={"maxiter": 500})
    W = result.x[:d * num_classes].reshape(d, num_classes)
    b = result.x[d * num_classes:]
    return W, b


def linear_accuracy(train, test):
    """Test accuracy of a linear softmax classifier on concatenated complete views."""
    def design(dataset):
        blocks = [dataset.view_matrix(v).reshape(len(dataset), -1)
                  for v in range(dataset.schema.num_views)]
        return np.concatenate(blocks, axis=1)

    x_train, x_test = design(train), design(test)
    mean, std = x_train.mean(axis=0), np.maximum(x_train.std(axis=0), 1e-8)
    W, b = _fit_logistic((x_train - mean) / std, train.labels, train.schema.num_classes)
    predictions = np.argmax(((x_test - mean) / std) @ W + b, axis=1)
    return float((predictions == test.labels).mean())


def calibrate_class_separation(config, target=0.9, n_fit=2000, growth=1.25, max_rounds=10):
    """Raise ``class_separation`` until a linear classifier reaches ``target`` accuracy.

    Returns the calibrated config and the accuracy reached.
    """
    config = config.resolved()
    separation = config.class_separation
    accuracy = 0.0
    for _ in range(max_rounds):
        fit_config = replace(config, class_separation=separation,
                             n_train=n_fit, n_val=1, n_test=n_fit)
        train, _, test = gen_tabular(fit_config)
        accuracy = linear_accuracy(train, test)
        logger.info("Linear accuracy at class separation {:.3f}: {:.4f}".format(separation, accuracy))
        if accuracy > target:
            break
        separation *= growth
    else:
        logger.warning("Calibration stopped at separation %.3f with linear accuracy %.4f",
                       separation, accuracy)
    return replace(config, class_separation=separation), accuracy


# ---------------------------------------------------------------- glyphs

def _pairwise_hamming(glyphs):
    flat = glyphs.reshape(len(glyphs), -1).astype(np.int64)
    return (flat[:, None, :] != flat[None, :, :]).sum(axis=2)


def make_glyphs(num_classes, side, seed, min_distance=10, max_attempts=1000):
    """Distinct binary glyphs, one per class.

    A glyph set violating the pairwise Hamming constraint is discarded and
    redrawn from the next attempt's stream, so the result is deterministic.
    """
    off_diagonal = ~np.eye(num_classes, dtype=bool)
    for attempt in range(max_attempts):
        rng = derived_rng(seed, _GLYPH_STREAM, attempt)
        glyphs = rng.random((num_classes, side, side)) < 0.5
        if glyphs.reshape(num_classes, -1).sum(axis=1).min() == 0:
            continue
        if _pairwise_hamming(glyphs)[off_diagonal].min() >= min_distance:
            if attempt:
                logger.debug("Glyph set accepted after %d redraws", attempt)
            return glyphs
    raise ValueError("Could not draw {} glyphs with pairwise distance >= {}".format(
        num_classes, min_distance))


def load_glyphs(directory, num_classes, max_side):
    glyphs = []
    for c in range(num_classes):
        path = Path(directory).joinpath("glyph_{:d}.npy".format(c))
        glyph = np.load(path) > 0.5
        if glyph.ndim != 2 or max(glyph.shape) > max_side:
            raise ValueError("{} must be a 2D array no larger than {}".format(path, max_side))
        glyphs.append(glyph)
    return glyphs


def view_backgrounds(config):
    """One smoothed-noise texture per view, larger than an image."""
    size = 4 * config.image_side
    textures = []
    for v in range(config.num_views):
        rng = derived_rng(config.seed, _BACKGROUND_STREAM, v)
        texture = gaussian_filter(rng.random((size, size)), sigma=1.0 + 0.5 * v, mode="wrap")
        texture -= texture.min()
        texture *= 0.5 / max(texture.max(), 1e-12)
        textures.append(texture)
    return textures


def gen_glyph_images(config=None):
    """Return (train, val, test) image datasets of shape (side, side, 1) per view.

    Every view of a sample shows the same class glyph at an independent random
    position over a crop of that view's own background texture.
    """
    config = (config or GeneratorConfig(kind="glyph")).resolved()
    if config.kind != "glyph":
        raise ValueError("gen_glyph_images needs a glyph config")
    side = config.image_side
    if config.glyph_dir:
        glyphs = load_glyphs(config.glyph_dir, config.num_classes, side)
    else:
        glyphs = list(make_glyphs(config.num_classes, config.glyph_side, config.seed,
                                  min_distance=config.glyph_min_distance))
    textures = view_backgrounds(config)
    schema = DatasetSchema(
        view_shapes=((side, side, 1),) * config.num_views,
        num_classes=config.num_classes,
        view_likelihood=("bernoulli",) * config.num_views,
    )
    max_offset = textures[0].shape[0] - side

    def make_sample(sample_id):
        rng = derived_rng(config.seed, _SAMPLE_STREAM, sample_id)
        label = int(rng.integers(config.num_classes))
        glyph = glyphs[label]
        views = []
        for texture in textures:
            r, c = rng.integers(max_offset + 1, size=2)
            image = texture[r:r + side, c:c + side].copy()
            i = rng.integers(side - glyph.shape[0] + 1)
            j = rng.integers(side - glyph.shape[1] + 1)
            if config.overlay:
                window = image[i:i + glyph.shape[0], j:j + glyph.shape[1]]
                window[glyph] = 1.0
            views.append(image.astype(np.float32)[:, :, None])
        return MultiViewSample(views, label=label, sample_id=sample_id)

    metadata = {"generator": config.to_dict()}
    return _triplet(schema, config, make_sample, metadata)


def generate(config):
    config = config.resolved()
    if config.kind == "tabular":
        return gen_tabular(config)
    return gen_glyph_images(config)
