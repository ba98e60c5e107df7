"""Multi-view samples, datasets and tensor batches."""
from __future__ import absolute_import, division

from dataclasses import dataclass

import numpy as np
import torch

LIKELIHOODS = ("gaussian", "bernoulli")
SPLIT_TAGS = ("train", "val", "test")
NO_LABEL = -1
_KEEP = object()


@dataclass(frozen=True)
class DatasetSchema(object):

    """Shape contract shared by datasets and models.

    ``view_shapes`` holds one tuple per view: ``(d,)`` for a flat feature
    vector or ``(height, width, channels)`` for an image view.
    """

    view_shapes: tuple
    num_classes: int
    view_likelihood: tuple = None

    def __post_init__(self):
        shapes = tuple(tuple(int(s) for s in shape) for shape in self.view_shapes)
        object.__setattr__(self, "view_shapes", shapes)
        likelihood = self.view_likelihood
        if likelihood is None:
            likelihood = ("gaussian",) * len(shapes)
        object.__setattr__(self, "view_likelihood", tuple(likelihood))
        self.validate()

    def validate(self):
        if len(self.view_shapes) < 2:
            raise ValueError("A multi-view schema needs at least 2 views.")
        for v, shape in enumerate(self.view_shapes):
            if len(shape) not in (1, 3) or any(s < 1 for s in shape):
                raise ValueError("View {} has invalid shape {}".format(v, shape))
        if int(self.num_classes) < 2:
            raise ValueError("num_classes must be at least 2.")
        if len(self.view_likelihood) != len(self.view_shapes):
            raise ValueError("One likelihood per view is required.")
        for name in self.view_likelihood:
            if name not in LIKELIHOODS:
                raise ValueError("Unknown view likelihood {!r}".format(name))

    @property
    def num_views(self):
        return len(self.view_shapes)

    def view_size(self, v):
        return int(np.prod(self.view_shapes[v]))

    def is_image(self, v):
        return len(self.view_shapes[v]) == 3

    @property
    def is_tabular(self):
        return all(len(shape) == 1 for shape in self.view_shapes)

    def to_dict(self):
        return {
            "num_views": self.num_views,
            "view_shapes": [list(s) for s in self.view_shapes],
            "num_classes": int(self.num_classes),
            "view_likelihood": list(self.view_likelihood),
        }

    @classmethod
    def from_dict(cls, payload):
        schema = cls(
            view_shapes=tuple(tuple(s) for s in payload["view_shapes"]),
            num_classes=int(payload["num_classes"]),
            view_likelihood=tuple(payload.get("view_likelihood") or ()) or None,
        )
        if "num_views" in payload and int(payload["num_views"]) != schema.num_views:
            raise ValueError("num_views disagrees with view_shapes.")
        return schema


class MultiViewSample(object):

    """One sample: optional feature array per view, optional label."""

    __slots__ = ("views", "label", "sample_id")

    def __init__(self, views, label=None, sample_id=0):
        self.views = [None if x is None else np.asarray(x) for x in views]
        self.label = None if label is None else int(label)
        self.sample_id = int(sample_id)

    @property
    def present(self):
        return np.array([x is not None for x in self.views], dtype=bool)

    @property
    def num_present(self):
        return int(self.present.sum())

    def validate(self, schema):
        if len(self.views) != schema.num_views:
            raise ValueError("Sample {} has {} views, schema has {}".format(
                self.sample_id, len(self.views), schema.num_views))
        if self.num_present < 1:
            raise ValueError("Sample {} has no present view.".format(self.sample_id))
        for v, x in enumerate(self.views):
            if x is not None and tuple(x.shape) != schema.view_shapes[v]:
                raise ValueError("Sample {} view {} has shape {}, expected {}".format(
                    self.sample_id, v, tuple(x.shape), schema.view_shapes[v]))
        if self.label is not None and not 0 <= self.label < schema.num_classes:
            raise ValueError("Sample {} label {} outside [0, {})".format(
                self.sample_id, self.label, schema.num_classes))

    def copy(self, views=None, label=_KEEP):
        """Shallow copy, optionally with new views or a new (possibly None) label."""
        return MultiViewSample(
            list(self.views) if views is None else views,
            self.label if label is _KEEP else label,
            self.sample_id,
        )

    def __eq__(self, other):
        if not isinstance(other, MultiViewSample):
            return NotImplemented
        if (self.sample_id, self.label) != (other.sample_id, other.label):
            return False
        if len(self.views) != len(other.views):
            return False
        for a, b in zip(self.views, other.views):
            if (a is None) != (b is None):
                return False
            if a is not None and not np.array_equal(a, b):
                return False
        return True

    def __repr__(self):
        return "MultiViewSample(id={}, present={}, label={})".format(
            self.sample_id, self.present.astype(int).tolist(), self.label)


class Dataset(object):

    """Ordered collection of samples sharing one schema."""

    def __init__(self, schema, samples, split_tag="train", metadata=None, validate=True):
        if split_tag not in SPLIT_TAGS:
            raise ValueError("Unknown split tag {!r}".format(split_tag))
        self._schema = schema
        self._samples = list(samples)
        self._split_tag = split_tag
        self.metadata = dict(metadata or {})
        if validate:
            self.validate()

    @property
    def schema(self):
        return self._schema

    @property
    def samples(self):
        return self._samples

    @property
    def split_tag(self):
        return self._split_tag

    def __len__(self):
        return len(self._samples)

    def __iter__(self):
        return iter(self._samples)

    def __getitem__(self, index):
        return self._samples[index]

    def validate(self):
        ids = set()
        for sample in self._samples:
            sample.validate(self._schema)
            if sample.sample_id in ids:
                raise ValueError("Duplicate sample_id {}".format(sample.sample_id))
            ids.add(sample.sample_id)

    def replace(self, samples=None, split_tag=None, metadata=None, validate=True):
        return Dataset(
            self._schema,
            self._samples if samples is None else samples,
            split_tag=self._split_tag if split_tag is None else split_tag,
            metadata=self.metadata if metadata is None else metadata,
            validate=validate,
        )

    @property
    def sample_ids(self):
        return np.array([s.sample_id for s in self._samples], dtype=np.int64)

    @property
    def labels(self):
        """Integer labels with NO_LABEL for missing ones."""
        return np.array([NO_LABEL if s.label is None else s.label for s in self._samples],
                        dtype=np.int64)

    @property
    def present_mask(self):
        if not self._samples:
            return np.zeros((0, self._schema.num_views), dtype=bool)
        return np.stack([s.present for s in self._samples])

    @property
    def num_labeled(self):
        return int((self.labels != NO_LABEL).sum())

    def labeled_subset(self):
        return self.replace(samples=[s for s in self._samples if s.label is not None])

    def view_matrix(self, v, dtype=np.float64):
        """Features of view ``v`` for every sample; absent rows are zero."""
        shape = (len(self._samples),) + self._schema.view_shapes[v]
        out = np.zeros(shape, dtype=dtype)
        for n, sample in enumerate(self._samples):
            if sample.views[v] is not None:
                out[n] = sample.views[v]
        return out

    def to_batch(self, dtype=torch.float64):
        return Batch(
            views=[torch.as_tensor(self.view_matrix(v), dtype=dtype)
                   for v in range(self._schema.num_views)],
            present=torch.as_tensor(self.present_mask),
            labels=torch.as_tensor(self.labels),
            sample_ids=torch.as_tensor(self.sample_ids),
        )

    def __repr__(self):
        return "Dataset(split={}, n={}, labeled={}, views={})".format(
            self._split_tag, len(self), self.num_labeled, self._schema.num_views)


class Batch(object):

    """Collated tensors: per-view (B, *shape) features, (B, V) mask, (B,) labels.

    Absent views are zero-filled; their rows are never read by the model.
    """

    def __init__(self, views, present, labels, sample_ids=None):
        self.views = list(views)
        self.present = torch.as_tensor(present, dtype=torch.bool)
        self.labels = torch.as_tensor(labels, dtype=torch.long)
        if sample_ids is None:
            sample_ids = torch.arange(self.labels.shape[0])
        self.sample_ids = torch.as_tensor(sample_ids, dtype=torch.long)
        if self.present.dim() != 2 or self.present.shape[1] != len(self.views):
            raise ValueError("Presence mask must have shape (B, V).")

    @classmethod
    def from_samples(cls, samples, schema, dtype=torch.float64):
        return Dataset(schema, samples, validate=False).to_batch(dtype=dtype)

    def __len__(self):
        return int(self.labels.shape[0])

    @property
    def num_views(self):
        return len(self.views)

    @property
    def labeled(self):
        return self.labels != NO_LABEL

    @property
    def num_labeled(self):
        return int(self.labeled.sum())

    def index(self, idx):
        idx = torch.as_tensor(idx, dtype=torch.long)
        return Batch(
            views=[x[idx] for x in self.views],
            present=self.present[idx],
            labels=self.labels[idx],
            sample_ids=self.sample_ids[idx],
        )

    def __repr__(self):
        return "Batch(n={}, labeled={}, views={})".format(len(self), self.num_labeled, self.num_views)
