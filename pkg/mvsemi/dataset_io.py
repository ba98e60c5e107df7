"""On-disk dataset format and CSV ingestion.

A split directory holds ``view_<v>.csv`` (flat views) or ``view_<v>.bin`` plus
``view_<v>.meta.json`` (image views, row-major little-endian float32),
``labels.csv`` and ``manifest.json`` with the schema and file checksums.
"""
from __future__ import absolute_import, division

import logging
from pathlib import Path

import numpy as np
import pandas as pd

from mvsemi.dataset import Dataset, DatasetSchema, MultiViewSample
from mvsemi.helpers import mkdir_p, read_json, sha256_file, write_json

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
FLOAT_FORMAT = "%.17g"
SPLITS = ("train", "val", "test")


class MalformedInputError(ValueError):
    pass


class ChecksumError(ValueError):
    pass


def _read_view_csv(path, width, view):
    frame = pd.read_csv(path, encoding="utf-8", float_precision="round_trip")
    if frame.columns[0] != "sample_id":
        raise MalformedInputError("{}: first column must be sample_id".format(path))
    if frame.shape[1] - 1 != width:
        raise MalformedInputError("{}: view {} has {} feature columns, schema expects {}".format(
            path, view, frame.shape[1] - 1, width))
    ids = frame["sample_id"].to_numpy()
    if len(np.unique(ids)) != len(ids):
        raise MalformedInputError("{}: duplicate sample_id".format(path))
    values = frame.iloc[:, 1:].to_numpy(dtype=np.float64)
    if not np.isfinite(values).all():
        raise MalformedInputError("{}: non-finite or empty feature values".format(path))
    return dict(zip(ids.astype(np.int64).tolist(), values))


def _read_labels_csv(path):
    frame = pd.read_csv(path, dtype={"sample_id": np.int64, "label": "Int64"}, encoding="utf-8")
    if list(frame.columns) != ["sample_id", "label"]:
        raise MalformedInputError("{}: expected columns sample_id,label".format(path))
    if frame["sample_id"].duplicated().any():
        raise MalformedInputError("{}: duplicate sample_id".format(path))
    labels = {}
    for sample_id, label in zip(frame["sample_id"].tolist(), frame["label"].tolist()):
        labels[int(sample_id)] = None if pd.isna(label) else int(label)
    return labels


def infer_tabular_schema(view_paths, label_path=None, num_classes=None):
    """Schema of CSV view files from their headers and the largest label."""
    shapes = []
    for path in view_paths:
        header = pd.read_csv(path, nrows=0, encoding="utf-8")
        if len(header.columns) < 2 or header.columns[0] != "sample_id":
            raise MalformedInputError("{}: expected sample_id plus feature columns".format(path))
        shapes.append((len(header.columns) - 1,))
    if num_classes is None:
        labels = [x for x in _read_labels_csv(label_path).values() if x is not None] if label_path else []
        if labels and min(labels) < 0:
            raise MalformedInputError("{}: negative labels".format(label_path))
        num_classes = max(2, max(labels) + 1) if labels else 2
    return DatasetSchema(view_shapes=tuple(shapes), num_classes=num_classes)


def load_tabular_csv(view_paths, label_path, schema, split_tag="train"):
    """Align per-view CSV matrices and an optional label file into a Dataset.

    A sample belongs to the dataset when it appears in at least one view file;
    a view is missing for a sample whose id is absent from that view's file.
    """
    if len(view_paths) != schema.num_views:
        raise ValueError("Expected {} view files, got {}".format(schema.num_views, len(view_paths)))
    if not schema.is_tabular:
        raise ValueError("CSV ingestion supports flat views only.")
    tables = [_read_view_csv(path, schema.view_size(v), v) for v, path in enumerate(view_paths)]
    labels = _read_labels_csv(label_path) if label_path else {}
    ids = sorted(set().union(*[t.keys() for t in tables]))
    samples = []
    for sample_id in ids:
        views = [table.get(sample_id) for table in tables]
        label = labels.get(sample_id)
        if label is not None and not 0 <= label < schema.num_classes:
            raise MalformedInputError("Label {} of sample {} outside [0, {})".format(
                label, sample_id, schema.num_classes))
        samples.append(MultiViewSample(views, label=label, sample_id=sample_id))
    logger.info("Read {:d} samples from {:d} view files".format(len(samples), len(view_paths)))
    return Dataset(schema, samples, split_tag=split_tag)


def _write_view_csv(dataset, v, path):
    rows = [(s.sample_id, s.views[v]) for s in dataset if s.views[v] is not None]
    width = dataset.schema.view_size(v)
    values = np.stack([x.reshape(-1) for _, x in rows]) if rows else np.zeros((0, width))
    frame = pd.DataFrame(values, columns=["f{:d}".format(i) for i in range(width)])
    frame.insert(0, "sample_id", np.array([i for i, _ in rows], dtype=np.int64))
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, encoding="utf-8")


def _write_view_bin(dataset, v, path, meta_path):
    rows = [(s.sample_id, s.views[v]) for s in dataset if s.views[v] is not None]
    shape = dataset.schema.view_shapes[v]
    values = (np.stack([x for _, x in rows]) if rows else np.zeros((0,) + shape))
    values.astype("<f4").tofile(str(path))
    write_json(meta_path, {
        "shape": list(shape),
        "dtype": "float32",
        "byteorder": "little",
        "count": len(rows),
        "sample_ids": [int(i) for i, _ in rows],
    })


def write_dataset(dataset, directory, extra=None):
    """Write one split directory and return its manifest."""
    directory = mkdir_p(Path(directory))
    schema = dataset.schema
    files = []
    for v in range(schema.num_views):
        if schema.is_image(v):
            path = directory.joinpath("view_{:d}.bin".format(v))
            meta = directory.joinpath("view_{:d}.meta.json".format(v))
            _write_view_bin(dataset, v, path, meta)
            files += [path, meta]
        else:
            path = directory.joinpath("view_{:d}.csv".format(v))
            _write_view_csv(dataset, v, path)
            files.append(path)
    labels_path = directory.joinpath("labels.csv")
    labels = pd.DataFrame({
        "sample_id": dataset.sample_ids,
        "label": pd.array([s.label for s in dataset], dtype="Int64"),
    })
    labels.to_csv(labels_path, index=False, encoding="utf-8")
    files.append(labels_path)

    manifest = {
        "format_version": FORMAT_VERSION,
        "split": dataset.split_tag,
        "schema": schema.to_dict(),
        "n_samples": len(dataset),
        "n_labeled": dataset.num_labeled,
        "metadata": dataset.metadata,
        "checksums": {p.name: sha256_file(p) for p in files},
    }
    if extra:
        manifest.update(extra)
    write_json(directory.joinpath("manifest.json"), manifest)
    return manifest


def verify_checksums(directory, manifest=None):
    directory = Path(directory)
    manifest = manifest or read_json(directory.joinpath("manifest.json"))
    for name, expected in sorted(manifest["checksums"].items()):
        path = directory.joinpath(name)
        if not path.exists():
            raise ChecksumError("{} is listed in the manifest but missing".format(path))
        if sha256_file(path) != expected:
            raise ChecksumError("Checksum mismatch for {}".format(path))


def read_dataset(directory, verify=True):
    directory = Path(directory)
    manifest_path = directory.joinpath("manifest.json")
    if not manifest_path.exists():
        raise MalformedInputError("{} has no manifest.json".format(directory))
    manifest = read_json(manifest_path)
    if verify:
        verify_checksums(directory, manifest)
    schema = DatasetSchema.from_dict(manifest["schema"])
    labels = _read_labels_csv(directory.joinpath("labels.csv"))
    tables = []
    for v in range(schema.num_views):
        if schema.is_image(v):
            meta = read_json(directory.joinpath("view_{:d}.meta.json".format(v)))
            shape = tuple(meta["shape"])
            if shape != schema.view_shapes[v]:
                raise MalformedInputError("view {} meta shape {} disagrees with schema".format(v, shape))
            values = np.fromfile(str(directory.joinpath("view_{:d}.bin".format(v))), dtype="<f4")
            if values.size != meta["count"] * int(np.prod(shape)):
                raise MalformedInputError("view_{:d}.bin size disagrees with its meta file".format(v))
            values = values.reshape((meta["count"],) + shape).astype(np.float32)
            tables.append(dict(zip(meta["sample_ids"], values)))
        else:
            tables.append(_read_view_csv(directory.joinpath("view_{:d}.csv".format(v)),
                                         schema.view_size(v), v))
    samples = [MultiViewSample([t.get(i) for t in tables], label=label, sample_id=i)
               for i, label in labels.items()]
    return Dataset(schema, samples, split_tag=manifest["split"], metadata=manifest.get("metadata"))


def write_splits(datasets, directory, extra=None):
    """Write train/val/test split directories plus a root manifest."""
    directory = mkdir_p(Path(directory))
    root = {"format_version": FORMAT_VERSION, "splits": {}}
    for dataset in datasets:
        split_dir = directory.joinpath(dataset.split_tag)
        write_dataset(dataset, split_dir, extra=extra)
        root["splits"][dataset.split_tag] = sha256_file(split_dir.joinpath("manifest.json"))
    if extra:
        root.update(extra)
    write_json(directory.joinpath("manifest.json"), root)
    return root


def read_splits(directory, verify=True, splits=SPLITS):
    directory = Path(directory)
    root = read_json(directory.joinpath("manifest.json"))
    datasets = []
    for tag in splits:
        manifest_path = directory.joinpath(tag, "manifest.json")
        if verify and sha256_file(manifest_path) != root["splits"].get(tag):
            raise ChecksumError("Checksum mismatch for {}".format(manifest_path))
        datasets.append(read_dataset(directory.joinpath(tag), verify=verify))
    return tuple(datasets)


def dataset_checksums(directory):
    """Checksums of the root manifest of a dataset directory, for run records."""
    directory = Path(directory)
    return {"manifest.json": sha256_file(directory.joinpath("manifest.json"))}
