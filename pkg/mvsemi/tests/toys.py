"""Small datasets and configs shared by the test modules."""
from __future__ import absolute_import, division

import numpy as np

from mvsemi.data_helpers import inject_missingness, reduce_labels, zscore_standardize
from mvsemi.dataset import MultiViewSample
from mvsemi.generators import GeneratorConfig, generate
from mvsemi.model import ModelConfig
from mvsemi.trainer import TrainConfig


def tabular_config(**kwargs):
    options = dict(kind="tabular", n_train=64, n_val=32, n_test=32, num_views=3,
                   view_dims=[5, 4, 3], shared_dim=4, class_separation=3.0, seed=0)
    options.update(kwargs)
    return GeneratorConfig(**options)


def glyph_config(**kwargs):
    options = dict(kind="glyph", n_train=40, n_val=20, n_test=20, num_views=2,
                   num_classes=4, glyph_min_distance=8, seed=0)
    options.update(kwargs)
    return GeneratorConfig(**options)


def toy_splits(drop_rate=0.0, keep_fraction=1.0, seed=0, **kwargs):
    """Standardized tabular (train, val, test) with optional missingness and label scarcity."""
    splits = [inject_missingness(d, drop_rate, seed) for d in generate(tabular_config(**kwargs))]
    splits, _ = zscore_standardize(*splits)
    splits[0] = reduce_labels(splits[0], keep_fraction, seed)
    return tuple(splits)


def small_model_config(**kwargs):
    options = dict(latent_dim=3, encoder_hidden=[8], decoder_hidden=[8], predictor_hidden=[6],
                   conv_channels=[4, 4], seed=0)
    options.update(kwargs)
    return ModelConfig(**options)


def small_train_config(**kwargs):
    options = dict(batch_size=16, max_epochs=3, patience=5, learning_rate=1e-2, eval_batch_size=64,
                   seed=0)
    options.update(kwargs)
    return TrainConfig(**options)


def random_samples(n, schema, seed=0, p_present=0.7, labeled=1.0):
    """Gaussian-feature samples with random presence; every sample keeps a view."""
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n):
        present = rng.random(schema.num_views) < p_present
        if not present.any():
            present[rng.integers(schema.num_views)] = True
        views = [rng.normal(size=shape) if present[v] else None
                 for v, shape in enumerate(schema.view_shapes)]
        label = int(rng.integers(schema.num_classes)) if rng.random() < labeled else None
        samples.append(MultiViewSample(views, label=label, sample_id=i))
    return samples
