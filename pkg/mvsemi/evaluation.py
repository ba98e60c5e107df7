"""Evaluation protocols: prediction metrics, impute-then-retrain, sensitivity sweeps."""
from __future__ import absolute_import, division

from dataclasses import replace
import logging
import multiprocessing as mp
import os
from pathlib import Path

import numpy as np
import pandas as pd
import torch

from mvsemi.baselines import BaselineKind, base_train, run_method
from mvsemi.data_helpers import mean_impute, train_view_means
from mvsemi.helpers import make_generator, write_json
from mvsemi.metrics import mean_std, report_from_probabilities
from mvsemi.model import predict_dataset
from mvsemi.trainer import TrainConfig

logger = logging.getLogger(__name__)

NUM_WORKERS_ENV = "MVSEMI_NUM_WORKERS"
SWEEP_AXES = ("alpha", "gamma")
DEFAULT_GRIDS = {
    "tabular": [0.0, 0.1, 1.0, 10.0, 100.0],
    "glyph": [0.0, 1.0, 10.0, 100.0, 1000.0],
}


def evaluate_prediction(predictor, dataset, method=None, seed=None, hyperparameters=None,
                        batch_size=1024, **predict_kwargs):
    """AUROC and accuracy of ``predictor`` on the labeled samples of ``dataset``."""
    labeled = dataset.labeled_subset()
    if not len(labeled):
        raise ValueError("The {} split has no labels to evaluate against.".format(dataset.split_tag))
    probabilities = predict_dataset(predictor, labeled, batch_size=batch_size, **predict_kwargs)
    return report_from_probabilities(
        probabilities, labeled.labels, labeled.split_tag,
        seed=seed, method=method, hyperparameters=dict(hyperparameters or {}),
    )


def run_hyperparameters(model_config, train_config, dataset):
    """alpha, gamma, beta, keep_fraction and drop_rate of a run, for reports."""
    metadata = dataset.metadata
    gamma = model_config.gamma if train_config.gamma is None else train_config.gamma
    alpha = model_config.alpha if train_config.alpha is None else train_config.alpha
    return {
        "alpha": float(alpha),
        "gamma": float(gamma),
        "beta": float(model_config.beta),
        "keep_fraction": float(metadata.get("keep_fraction", 1.0)),
        "drop_rate": float(metadata.get("drop_rate", 0.0)),
    }


# ---------------------------------------------------------------- imputation

def impute_dataset(model, dataset, mode="mean", seed=0, batch_size=1024):
    """Copy of ``dataset`` with every absent view decoded from the fused posterior."""
    generator = make_generator(seed)
    full = dataset.to_batch(dtype=model.dtype)
    filled = [[] for _ in range(dataset.schema.num_views)]
    for start in range(0, len(dataset), batch_size):
        idx = torch.arange(start, min(start + batch_size, len(dataset)))
        for v, x in enumerate(model.impute_batch(full.index(idx), mode=mode, generator=generator)):
            filled[v].append(x.numpy())
    filled = [np.concatenate(chunks, axis=0) for chunks in filled]
    samples = []
    for n, sample in enumerate(dataset):
        views = [x if x is not None else filled[v][n].astype(_view_dtype(dataset, v))
                 for v, x in enumerate(sample.views)]
        samples.append(sample.copy(views=views))
    metadata = dict(dataset.metadata)
    metadata["imputed"] = {"mode": mode, "seed": int(seed)}
    return dataset.replace(samples=samples, metadata=metadata)


def _view_dtype(dataset, v):
    for sample in dataset:
        if sample.views[v] is not None:
            return sample.views[v].dtype
    return np.float64


def imputation_mse(model, incomplete, complete, means, mode="mean", seed=0):
    """Feature MSE on dropped views for model imputation and mean imputation."""
    if list(incomplete.sample_ids) != list(complete.sample_ids):
        raise ValueError("Incomplete and complete datasets must hold the same samples in order.")
    imputed = impute_dataset(model, incomplete, mode=mode, seed=seed)
    errors = {"model": [], "mean": []}
    for a, b, c in zip(incomplete, imputed, complete):
        for v, x in enumerate(a.views):
            if x is None and c.views[v] is not None:
                truth = np.asarray(c.views[v], dtype=np.float64)
                errors["model"].append(np.mean((np.asarray(b.views[v], dtype=np.float64) - truth) ** 2))
                errors["mean"].append(np.mean((np.asarray(means[v], dtype=np.float64) - truth) ** 2))
    if not errors["model"]:
        return {"model": 0.0, "mean": 0.0, "n_views": 0}
    return {"model": float(np.mean(errors["model"])), "mean": float(np.mean(errors["mean"])),
            "n_views": len(errors["model"])}


def imputation_grid(model, dataset, n_samples=8, mode="mean", seed=0):
    """Observed and imputed image views of the first ``n_samples`` incomplete samples.

    Returns arrays ``observed`` and ``imputed`` of shape (n, V, H, W) with
    absent observed views left at zero, the presence ``mask``, ``sample_ids``
    and ``grid``: one (observed, imputed) pair of tile rows per sample and one
    tile column per view.
    """
    shapes = set(dataset.schema.view_shapes)
    if dataset.schema.is_tabular or len(shapes) != 1:
        raise ValueError("Imputation grids need image views of a single shape.")
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    chosen = [s for s in dataset if not s.present.all()][:n_samples]
    if not chosen:
        raise ValueError("The {} split has no sample with a missing view.".format(dataset.split_tag))
    subset = dataset.replace(samples=chosen)
    imputed = impute_dataset(model, subset, mode=mode, seed=seed)
    n, V = len(chosen), dataset.schema.num_views
    h, w = shapes.pop()[:2]
    observed = np.zeros((n, V, h, w), dtype=np.float32)
    filled = np.zeros_like(observed)
    for i, (a, b) in enumerate(zip(subset, imputed)):
        for v in range(V):
            if a.views[v] is not None:
                observed[i, v] = np.asarray(a.views[v]).reshape(h, w)
            filled[i, v] = np.asarray(b.views[v]).reshape(h, w)
    # (n, 2, V, h, w) -> rows of tiles
    tiles = np.stack([observed, filled], axis=1).transpose(0, 1, 3, 2, 4)
    return {
        "observed": observed,
        "imputed": filled,
        "mask": subset.present_mask,
        "sample_ids": subset.sample_ids,
        "grid": tiles.reshape(n * 2 * h, V * w),
    }


def _check_provenance(datasets):
    for dataset, tag in zip(datasets, ("train", "val", "test")):
        if dataset.split_tag != tag:
            raise ValueError("Expected the {} split, got {!r}".format(tag, dataset.split_tag))


def evaluate_imputation(models, datasets, base_config=None, impute_mode="mean", seeds=(0,),
                        train_config=None):
    """Train and test Base on mean-imputed and model-imputed copies of the splits.

    ``models`` maps a condition name to a trained generative model. Returns
    {condition: [test MetricsReport per seed]}; the "mean" condition is always
    included.
    """
    _check_provenance(datasets)
    train = datasets[0]
    means = train_view_means(train)
    conditions = {"mean": [mean_impute(d, means) for d in datasets]}
    for name, model in sorted(models.items()):
        conditions[name] = [impute_dataset(model, d, mode=impute_mode) for d in datasets]
    train_config = train_config or TrainConfig()
    results = {}
    for name, imputed in conditions.items():
        _check_provenance(imputed)
        results[name] = []
        for seed in seeds:
            config = replace(base_config, seed=seed) if base_config else None
            classifiers, _ = base_train(imputed, config, replace(train_config, seed=seed))
            report = evaluate_prediction(classifiers, imputed[2], method="base+{}".format(name),
                                         seed=seed, hyperparameters={"impute_mode": impute_mode})
            results[name].append(report)
        mean, std = mean_std([r.auroc for r in results[name]])
        logger.info("Imputation {:s}: test AUROC {:.4f} ± {:.4f}".format(name, mean, std))
    return results


# ---------------------------------------------------------------- sweeps

def num_workers():
    value = os.environ.get(NUM_WORKERS_ENV, "1")
    try:
        workers = int(value)
    except ValueError:
        raise ValueError("{} must be an integer, got {!r}".format(NUM_WORKERS_ENV, value))
    return max(1, workers)


def _sweep_point(task):
    axis, value, other, seed, datasets, model_config, train_config, kind = task
    other_axis = "gamma" if axis == "alpha" else "alpha"
    try:
        torch.set_num_threads(1)
        overrides = {axis: float(value)}
        if other is not None:
            overrides[other_axis] = float(other)
        model_config = replace(model_config, seed=seed, **overrides)
        train_config = replace(train_config, seed=seed, gamma=None, alpha=None)
        predictor, history = run_method(kind, datasets, model_config, train_config)
        report = evaluate_prediction(predictor, datasets[1], method=kind, seed=seed,
                                     hyperparameters=overrides)
        metric = history.selection_metric
        return {"value": float(value), "seed": seed, "metric": metric,
                "score": getattr(report, metric), "note": ""}
    except Exception as e:
        logger.warning("Sweep point %s=%s (seed %d) failed: %s", axis, value, seed, e)
        return {"value": float(value), "seed": seed, "metric": None, "score": float("nan"),
                "note": "{}: {}".format(type(e).__name__, e)}


def sensitivity_sweep(axis, grid, fixed_other, datasets, model_config, train_config=None,
                      seeds=(0,), out_csv=None, kind="ours", workers=None):
    """Validation metric per grid value of ``alpha`` or ``gamma``.

    Each point trains a fresh model per seed. Returns a DataFrame with the
    per-seed rows; ``out_csv`` receives the two-column (value, metric) table
    of seed means. Failed points become NaN rows with a note.
    """
    if axis not in SWEEP_AXES:
        raise ValueError("axis must be one of {}".format(SWEEP_AXES))
    grid = [float(g) for g in grid]
    if not grid:
        raise ValueError("The sweep grid is empty.")
    kind = BaselineKind(kind).value
    train_config = train_config or TrainConfig()
    tasks = [(axis, value, fixed_other, seed, datasets, model_config, train_config, kind)
             for value in grid for seed in seeds]
    workers = num_workers() if workers is None else workers
    if workers > 1 and len(tasks) > 1:
        with mp.get_context("spawn").Pool(processes=min(workers, len(tasks))) as pool:
            rows = pool.map(_sweep_point, tasks)
    else:
        rows = [_sweep_point(task) for task in tasks]
    table = pd.DataFrame(rows)
    if out_csv is not None:
        write_sweep_csv(table, out_csv)
    return table


def write_sweep_csv(table, path):
    """Two columns: grid value and the seed-mean validation metric."""
    summary = (table.groupby("value", sort=True)["score"]
               .apply(lambda s: mean_std(s.to_numpy())[0])
               .reset_index()
               .rename(columns={"score": "metric"}))
    summary.to_csv(path, index=False, float_format="%.6f", encoding="utf-8")
    failures = table[table["note"] != ""]
    if len(failures):
        write_json(Path(path).with_suffix(".failures.json"), failures.to_dict(orient="records"))
    return summary
