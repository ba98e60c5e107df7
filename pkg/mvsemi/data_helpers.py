"""Dataset transforms: missingness, label scarcity, standardization, splits."""
from __future__ import absolute_import, division

from collections import defaultdict
import logging

import numpy as np

from mvsemi.helpers import derived_rng

logger = logging.getLogger(__name__)

# stream tags for derived_rng(seed, tag, ...)
_DROP_STREAM = 10
_LABEL_STREAM = 11
_SPLIT_STREAM = 12

STD_FLOOR = 1e-8


def _round_half_up(value):
    return int(np.floor(value + 0.5))


def inject_missingness(dataset, drop_rate, seed):
    """Drop each (sample, view) independently with probability ``drop_rate``.

    A sample left without views gets one uniformly chosen view back. Views
    that were already absent stay absent; surviving views keep their values.
    """
    if not 0 <= drop_rate < 1:
        raise ValueError("drop_rate must lie in [0, 1), got {}".format(drop_rate))
    if drop_rate == 0:
        return dataset.replace()
    num_views = dataset.schema.num_views
    samples = []
    restored = 0
    for sample in dataset:
        rng = derived_rng(seed, _DROP_STREAM, sample.sample_id)
        drop = rng.random(num_views) < drop_rate
        keep = sample.present & ~drop
        if not keep.any():
            candidates = np.flatnonzero(sample.present)
            keep[candidates[rng.integers(len(candidates))]] = True
            restored += 1
        views = [x if keep[v] else None for v, x in enumerate(sample.views)]
        samples.append(sample.copy(views=views))
    metadata = dict(dataset.metadata)
    metadata["drop_rate"] = float(drop_rate)
    metadata["drop_seed"] = int(seed)
    logger.debug("Dropped views at rate %.3f; restored one view for %d samples", drop_rate, restored)
    return dataset.replace(samples=samples, metadata=metadata)


def reduce_labels(dataset, keep_fraction, seed):
    """Keep round(keep_fraction * count) labels per class, chosen uniformly.

    Only valid on the train split. Samples whose label is removed stay in the
    dataset as unlabeled observations.
    """
    if not 0 < keep_fraction <= 1:
        raise ValueError("keep_fraction must lie in (0, 1], got {}".format(keep_fraction))
    if dataset.split_tag != "train":
        raise ValueError("Labels are only reduced on the train split, got {!r}".format(dataset.split_tag))
    metadata = dict(dataset.metadata)
    metadata["keep_fraction"] = float(keep_fraction)
    if keep_fraction == 1:
        return dataset.replace(metadata=metadata)

    by_class = defaultdict(list)
    for n, sample in enumerate(dataset):
        if sample.label is not None:
            by_class[sample.label].append(n)
    keep = set()
    warnings = []
    kept_counts = {}
    for label in sorted(by_class):
        indices = np.asarray(by_class[label])
        n_keep = _round_half_up(keep_fraction * len(indices))
        rng = derived_rng(seed, _LABEL_STREAM, label)
        chosen = rng.permutation(indices)[:n_keep]
        keep.update(int(i) for i in chosen)
        kept_counts[int(label)] = n_keep
        if n_keep == 0:
            message = "Class {} keeps no labels at keep_fraction {}".format(label, keep_fraction)
            logger.warning(message)
            warnings.append(message)
    samples = [s if (s.label is None or n in keep) else s.copy(label=None)
               for n, s in enumerate(dataset)]
    metadata["kept_label_counts"] = kept_counts
    if warnings:
        metadata["label_warnings"] = warnings
    return dataset.replace(samples=samples, metadata=metadata)


def feature_statistics(dataset):
    """Per-view (mean, std) over present entries; std floored at STD_FLOOR."""
    if not dataset.schema.is_tabular:
        raise ValueError("Feature statistics need a tabular schema.")
    stats = []
    for v in range(dataset.schema.num_views):
        rows = [s.views[v] for s in dataset if s.views[v] is not None]
        if rows:
            matrix = np.stack(rows).astype(np.float64)
            mean, std = matrix.mean(axis=0), matrix.std(axis=0)
        else:
            size = dataset.schema.view_shapes[v][0]
            mean, std = np.zeros(size), np.ones(size)
        stats.append((mean, np.maximum(std, STD_FLOOR)))
    return stats


def apply_standardization(dataset, stats):
    samples = []
    for sample in dataset:
        views = [None if x is None else (x - stats[v][0]) / stats[v][1]
                 for v, x in enumerate(sample.views)]
        samples.append(sample.copy(views=views))
    return dataset.replace(samples=samples)


def zscore_standardize(train, *others, stats=None, refit=True):
    """Standardize with statistics of the train split's present views.

    Returns the list of transformed datasets (train first) and the per-view
    (mean, std) statistics. With ``refit=False`` the given ``stats`` are used.
    """
    if refit:
        stats = feature_statistics(train)
    elif stats is None:
        raise ValueError("refit=False needs precomputed stats.")
    return [apply_standardization(d, stats) for d in (train,) + others], stats


def split_dataset(dataset, fractions=(0.64, 0.16, 0.20), stratified=True, seed=0):
    """Disjoint train/val/test split stratified by label.

    Unlabeled samples always go to train.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or abs(sum(fractions) - 1) > 1e-9 or min(fractions) < 0:
        raise ValueError("fractions must be three non-negative numbers summing to 1")

    groups = defaultdict(list)
    unlabeled = []
    for n, sample in enumerate(dataset):
        if sample.label is None:
            unlabeled.append(n)
        else:
            groups[sample.label if stratified else 0].append(n)

    assignment = {"train": list(unlabeled), "val": [], "test": []}
    for key in sorted(groups):
        rng = derived_rng(seed, _SPLIT_STREAM, key)
        indices = rng.permutation(np.asarray(groups[key]))
        n_train = _round_half_up(fractions[0] * len(indices))
        n_val = min(_round_half_up(fractions[1] * len(indices)), len(indices) - n_train)
        assignment["train"].extend(int(i) for i in indices[:n_train])
        assignment["val"].extend(int(i) for i in indices[n_train:n_train + n_val])
        assignment["test"].extend(int(i) for i in indices[n_train + n_val:])

    return tuple(
        dataset.replace(samples=[dataset[i] for i in sorted(assignment[tag])], split_tag=tag)
        for tag in ("train", "val", "test")
    )


def mean_impute(dataset, means):
    """Fill every absent view with the given per-view feature means."""
    samples = []
    for sample in dataset:
        views = [np.array(means[v], copy=True) if x is None else x
                 for v, x in enumerate(sample.views)]
        samples.append(sample.copy(views=views))
    return dataset.replace(samples=samples)


def train_view_means(train):
    """Per-view feature means over present entries of the train split."""
    means = []
    for v, shape in enumerate(train.schema.view_shapes):
        rows = [s.views[v] for s in train if s.views[v] is not None]
        means.append(np.mean(np.stack(rows), axis=0) if rows else np.zeros(shape))
    return means
