"""Classification metrics and multi-run summaries."""
from __future__ import absolute_import, division

from dataclasses import asdict, dataclass, field
import logging

import numpy as np
from scipy.stats import rankdata

from mvsemi.helpers import write_json

logger = logging.getLogger(__name__)


def binary_auroc(scores, positive):
    """Probability that a random positive outranks a random negative, ties 0.5.

    Uses the Mann-Whitney U statistic on mid-ranks.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    positive = np.asarray(positive, dtype=bool).ravel()
    if scores.shape != positive.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int(positive.sum())
    n_neg = len(positive) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs at least one positive and one negative sample")
    ranks = rankdata(scores, method="average")
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auroc_details(scores, labels):
    """AUROC and the classes skipped from the one-vs-rest macro average.

    ``scores`` is either a vector of positive-class scores (binary labels) or
    an (n, |Y|) matrix. Two-column matrices are scored on column 1.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if scores.ndim == 1:
        return binary_auroc(scores, labels == 1), []
    if scores.shape[0] != len(labels):
        raise ValueError("scores and labels differ in length")
    if scores.shape[1] == 2:
        return binary_auroc(scores[:, 1], labels == 1), []
    values, skipped = [], []
    for c in range(scores.shape[1]):
        positive = labels == c
        if positive.all() or not positive.any():
            skipped.append(c)
            continue
        values.append(binary_auroc(scores[:, c], positive))
    if not values:
        raise ValueError("No class has both positive and negative samples")
    if skipped:
        logger.debug("AUROC skipped classes %s", skipped)
    return float(np.mean(values)), skipped


def auroc(scores, labels):
    return auroc_details(scores, labels)[0]


def accuracy(predictions, labels):
    """Fraction of correct predictions.

    A score matrix is reduced by argmax, which breaks ties towards the lowest
    class index.
    """
    predictions = np.asarray(predictions)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if predictions.ndim == 2:
        predictions = np.argmax(predictions, axis=1)
    if len(labels) == 0:
        raise ValueError("accuracy of an empty prediction set")
    if len(predictions) != len(labels):
        raise ValueError("predictions and labels differ in length")
    return float(np.mean(predictions == labels))


@dataclass
class MetricsReport(object):

    auroc: float
    accuracy: float
    split: str
    n_samples: int
    seed: int = None
    method: str = None
    hyperparameters: dict = field(default_factory=dict)
    skipped_classes: list = field(default_factory=list)

    def __post_init__(self):
        for name in ("auroc", "accuracy"):
            value = getattr(self, name)
            if not (np.isnan(value) or 0 <= value <= 1):
                raise ValueError("{} must lie in [0, 1], got {}".format(name, value))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, payload):
        return cls(**payload)

    def save(self, path):
        write_json(path, self.to_dict())


def report_from_probabilities(probabilities, labels, split, **kwargs):
    value, skipped = auroc_details(probabilities, labels)
    return MetricsReport(
        auroc=value,
        accuracy=accuracy(probabilities, labels),
        split=split,
        n_samples=int(len(labels)),
        skipped_classes=skipped,
        **kwargs
    )


def mean_std(values):
    """Mean and sample standard deviation (0 for a single value), NaNs ignored."""
    values = np.asarray(values, dtype=np.float64)
    values = values[~np.isnan(values)]
    if not len(values):
        return float("nan"), float("nan")
    std = values.std(ddof=1) if len(values) > 1 else 0.0
    return float(values.mean()), float(std)


def format_mean_std(values, digits=4):
    mean, std = mean_std(values)
    return "{:.{d}f} ± {:.{d}f}".format(mean, std, d=digits)


def summarize_reports(reports):
    """{metric: (mean, std)} over a list of MetricsReports, e.g. one per seed."""
    return {
        "auroc": mean_std([r.auroc for r in reports]),
        "accuracy": mean_std([r.accuracy for r in reports]),
        "n_runs": len(reports),
    }
