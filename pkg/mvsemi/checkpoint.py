"""Checkpoint directories: ``params.pt`` blob plus a JSON ``manifest.json``.

The manifest is readable on its own: it records the method kind, schema,
configuration, seed, code version and validation metrics.
"""
from __future__ import absolute_import, division

import logging
from pathlib import Path

import torch

from mvsemi.dataset import DatasetSchema
from mvsemi.helpers import code_version, mkdir_p, read_json, write_json

logger = logging.getLogger(__name__)

PARAMS_FILE = "params.pt"
MANIFEST_FILE = "manifest.json"
CHECKPOINT_VERSION = 1


def _predictor_classes():
    from mvsemi.baselines import BaseClassifiers, MVAEPipeline
    from mvsemi.model import MultiViewModel
    return {cls.__name__: cls for cls in (MultiViewModel, BaseClassifiers, MVAEPipeline)}


def save_checkpoint(predictor, directory, kind, seed=None, metrics=None, extra=None):
    directory = mkdir_p(Path(directory))
    torch.save(predictor.state_dict(), str(directory.joinpath(PARAMS_FILE)))
    manifest = {
        "checkpoint_version": CHECKPOINT_VERSION,
        "kind": kind,
        "predictor": type(predictor).__name__,
        "schema": predictor.schema.to_dict(),
        "config": predictor.config_dict(),
        "seed": seed,
        "code_version": code_version(),
        "metrics": metrics or {},
    }
    if extra:
        manifest.update(extra)
    write_json(directory.joinpath(MANIFEST_FILE), manifest)
    logger.debug("Checkpoint written to %s", directory)
    return manifest


def read_manifest(directory):
    path = Path(directory).joinpath(MANIFEST_FILE)
    if not path.exists():
        raise ValueError("{} is not a checkpoint directory".format(directory))
    return read_json(path)


def load_checkpoint(directory):
    """Rebuild the predictor stored in ``directory``; returns (predictor, manifest)."""
    manifest = read_manifest(directory)
    classes = _predictor_classes()
    try:
        cls = classes[manifest["predictor"]]
    except KeyError:
        raise ValueError("Unknown predictor {!r} in {}".format(manifest.get("predictor"), directory))
    schema = DatasetSchema.from_dict(manifest["schema"])
    predictor = cls.from_config_dict(schema, manifest["config"])
    state = torch.load(str(Path(directory).joinpath(PARAMS_FILE)), weights_only=True)
    predictor.load_state_dict(state)
    predictor.eval()
    return predictor, manifest
