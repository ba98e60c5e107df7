"""Mini-batch optimization with validation-based model selection."""
from __future__ import absolute_import, division

import copy
from dataclasses import asdict, dataclass
import json
import logging
from pathlib import Path
from time import time

import torch

from mvsemi.helpers import derived_rng, format_duration, make_generator, mkdir_p, write_json
from mvsemi.losses import total_loss, unsupervised_elbo_loss
from mvsemi.metrics import MetricsReport, report_from_probabilities
from mvsemi.model import predict_dataset

logger = logging.getLogger(__name__)

OPTIMIZERS = {
    "adam": torch.optim.Adam,
    "adaptive-moment": torch.optim.Adam,
    "sgd": torch.optim.SGD,
    "plain-sgd": torch.optim.SGD,
}
SELECTION_METRICS = ("auto", "auroc", "accuracy", "elbo")

_BATCH_STREAM = 20


class NonFiniteLossError(FloatingPointError):

    def __init__(self, message, step=None, batch_index=None, sample_ids=None, breakdown=None):
        super(NonFiniteLossError, self).__init__(message)
        self.step = step
        self.batch_index = batch_index
        self.sample_ids = sample_ids
        self.breakdown = breakdown


@dataclass
class TrainConfig(object):

    batch_size: int = 128
    max_epochs: int = 100
    max_steps: int = None
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    patience: int = 10
    selection_metric: str = "auto"
    eval_every: int = 1
    eval_batch_size: int = 1024
    seed: int = 0
    gamma: float = None
    alpha: float = None
    unsup_weight: float = 1.0
    num_threads: int = None
    debug: bool = False

    def validate(self):
        if self.batch_size < 4:
            raise ValueError("batch_size must be at least 4")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_epochs < 1 or self.eval_every < 1 or self.patience < 1:
            raise ValueError("max_epochs, eval_every and patience must be at least 1")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError("optimizer must be one of {}".format(sorted(OPTIMIZERS)))
        if self.selection_metric not in SELECTION_METRICS:
            raise ValueError("selection_metric must be one of {}".format(SELECTION_METRICS))
        if self.unsup_weight < 0:
            raise ValueError("unsup_weight must be non-negative")

    def to_dict(self):
        return asdict(self)


def batch_indices(n, batch_size, seed, epoch):
    """Shuffled index blocks for one epoch; the last block may be short."""
    if n < 1:
        raise ValueError("Cannot batch an empty dataset.")
    order = derived_rng(seed, _BATCH_STREAM, epoch).permutation(n)
    return [order[start:start + batch_size] for start in range(0, n, batch_size)]


def make_batches(dataset, batch_size, seed, epoch, dtype=torch.float64):
    full = dataset.to_batch(dtype=dtype)
    return [full.index(idx) for idx in batch_indices(len(dataset), batch_size, seed, epoch)]


def resolve_selection_metric(name, num_classes):
    if name == "auto":
        return "auroc" if num_classes == 2 else "accuracy"
    return name


class ModelObjective(object):

    """total_loss with fixed weights, as a callable (model, batch, generator)."""

    def __init__(self, gamma=None, alpha=None, unsup_weight=1.0):
        self.gamma = gamma
        self.alpha = alpha
        self.unsup_weight = unsup_weight

    def __call__(self, model, batch, generator):
        return total_loss(model, batch, gamma=self.gamma, alpha=self.alpha,
                          generator=generator, unsup_weight=self.unsup_weight)


class TrainHistory(object):

    def __init__(self, selection_metric):
        self.selection_metric = selection_metric
        self.steps = []
        self.evals = []
        self.best = None

    def add_step(self, record):
        if self.steps and record["step"] <= self.steps[-1]["step"]:
            raise ValueError("Step indices must increase")
        self.steps.append(record)

    def add_eval(self, record):
        """Record an evaluation; returns True when it is the new best."""
        self.evals.append(record)
        if self.best is None or record["value"] > self.best["value"]:
            self.best = dict(record)
            return True
        return False

    def totals(self):
        return [r["total"] for r in self.steps]

    def reports(self):
        """Validation MetricsReports in evaluation order (None where the split had no labels)."""
        return [MetricsReport.from_dict(r["report"]) if r.get("report") else None for r in self.evals]

    def save(self, directory):
        directory = mkdir_p(Path(directory))
        with open(directory.joinpath("history.jsonl"), "w", encoding="utf-8") as f:
            for record in self.steps:
                f.write(json.dumps(record, sort_keys=True) + "\n")
        write_json(directory.joinpath("validation_metrics.json"), {
            "selection_metric": self.selection_metric,
            "evals": self.evals,
            "best": self.best,
        })
        for record in self.evals:
            if record.get("report"):
                eval_dir = mkdir_p(directory.joinpath("evals", "step_{:06d}".format(record["step"])))
                write_json(eval_dir.joinpath("metrics.json"), record["report"])


class Trainer(object):

    """Optimizes ``model`` on ``train`` and keeps the best parameters on ``val``.

    ``objective(model, batch, generator)`` returns the loss tensor and a
    LossBreakdown. It defaults to the combined objective with the weights of
    the train config, falling back to the model config.
    """

    def __init__(self, model, train, val, config=None, objective=None, parameters=None):
        self._model = model
        self._train = train
        self._val = val
        self._config = config or TrainConfig()
        self._config.validate()
        if val is None or not len(val):
            raise ValueError("Model selection needs a nonempty validation split.")
        if train.schema != model.schema or val.schema != model.schema:
            raise ValueError("Datasets and model disagree on the schema.")
        self._objective = objective or ModelObjective(
            self._config.gamma, self._config.alpha, self._config.unsup_weight)
        self._parameters = parameters
        self._metric = resolve_selection_metric(self._config.selection_metric,
                                                model.schema.num_classes)
        self._history = TrainHistory(self._metric)

    @property
    def model(self):
        return self._model

    @property
    def config(self):
        return self._config

    @property
    def history(self):
        return self._history

    @property
    def selection_metric(self):
        return self._metric

    def _optimizer(self):
        if self._parameters is None:
            parameters = [p for p in self._model.parameters() if p.requires_grad]
        else:
            parameters = list(self._parameters)
        return OPTIMIZERS[self._config.optimizer](parameters, lr=self._config.learning_rate)

    def hyperparameters(self):
        """Loss weights and data protocol of this run, attached to every validation report."""
        metadata = self._train.metadata
        record = {"keep_fraction": float(metadata.get("keep_fraction", 1.0)),
                  "drop_rate": float(metadata.get("drop_rate", 0.0))}
        model_config = getattr(self._model, "config", None)
        for name in ("gamma", "alpha", "unsup_weight"):
            value = getattr(self._objective, name, None)
            if value is None:
                value = getattr(model_config, name, None)
            if value is not None:
                record[name] = float(value)
        if hasattr(model_config, "beta"):
            record["beta"] = float(model_config.beta)
        return record

    def validation_metric(self):
        """Selection metric on the validation split; higher is better."""
        return self.validation_report()[0]

    def validation_report(self):
        """(selection value, MetricsReport on the labeled validation samples).

        The report is None when the validation split carries no labels, which
        only ELBO selection allows.
        """
        model = self._model
        model.eval()
        labeled = self._val.labeled_subset()
        report = None
        if len(labeled):
            probabilities = predict_dataset(model, labeled, batch_size=self._config.eval_batch_size)
            report = report_from_probabilities(probabilities, labeled.labels, labeled.split_tag,
                                               seed=self._config.seed,
                                               hyperparameters=self.hyperparameters())
        if self._metric == "elbo":
            generator = make_generator(self._config.seed)
            full = self._val.to_batch(dtype=model.dtype)
            total = 0.0
            with torch.no_grad():
                for start in range(0, len(self._val), self._config.eval_batch_size):
                    idx = torch.arange(start, min(start + self._config.eval_batch_size, len(self._val)))
                    loss, _ = unsupervised_elbo_loss(model, full.index(idx), generator=generator,
                                                     include_labeled=True)
                    total += float(loss) * len(idx)
            return -total / len(self._val), report
        if report is None:
            raise ValueError("The validation split has no labels for {} selection.".format(self._metric))
        return getattr(report, self._metric), report

    def _check_finite(self, loss, breakdown, step, batch_index, batch):
        if torch.isfinite(loss).all() and breakdown.is_finite():
            return
        logger.error("Non-finite loss at step %d (batch %d): %s", step, batch_index,
                     json.dumps(breakdown.to_record(step), sort_keys=True))
        raise NonFiniteLossError(
            "Non-finite loss at step {} (batch {})".format(step, batch_index),
            step=step, batch_index=batch_index,
            sample_ids=batch.sample_ids.tolist(), breakdown=breakdown,
        )

    def _check_parameters(self, step):
        for name, p in self._model.named_parameters():
            if not torch.isfinite(p).all():
                raise NonFiniteLossError("Parameter {} became non-finite at step {}".format(name, step),
                                         step=step)

    def run(self):
        """Train and restore the best-validation parameters; returns the history."""
        config = self._config
        model = self._model
        if config.num_threads:
            torch.set_num_threads(config.num_threads)
        time0 = time()
        optimizer = self._optimizer()
        generator = make_generator(config.seed)
        full = self._train.to_batch(dtype=model.dtype)
        best_state = copy.deepcopy(model.state_dict())
        step = 0
        stale = 0
        done = False
        for epoch in range(config.max_epochs):
            model.train()
            for b, idx in enumerate(batch_indices(len(self._train), config.batch_size, config.seed, epoch)):
                batch = full.index(idx)
                loss, breakdown = self._objective(model, batch, generator)
                self._check_finite(loss, breakdown, step, b, batch)
                optimizer.zero_grad()
                if loss.requires_grad:
                    loss.backward()
                    optimizer.step()
                step += 1
                record = breakdown.to_record(step)
                record["epoch"] = epoch
                self._history.add_step(record)
                logger.debug("step %d: total %.6f", step, breakdown.total)
                if config.debug:
                    self._check_parameters(step)
                if config.max_steps and step >= config.max_steps:
                    done = True
                    break

            if (epoch + 1) % config.eval_every == 0 or done or epoch == config.max_epochs - 1:
                value, report = self.validation_report()
                improved = self._history.add_eval(
                    {"epoch": epoch, "step": step, "metric": self._metric, "value": value,
                     "report": report.to_dict() if report is not None else None})
                if improved:
                    best_state = copy.deepcopy(model.state_dict())
                    stale = 0
                else:
                    stale += 1
                logger.info("Epoch {:d}, step {:d}: validation {} {:.4f} (best {:.4f})".format(
                    epoch, step, self._metric, value, self._history.best["value"]))
                if stale >= config.patience:
                    logger.info("Stopping early after {:d} evaluations without improvement".format(stale))
                    break
            if done:
                break

        model.load_state_dict(best_state)
        model.eval()
        logger.info("Training finished after {:d} steps; total time: {}".format(
            step, format_duration(time() - time0)))
        return self._history


def train(model, datasets, config=None, objective=None, parameters=None):
    """Train ``model`` on (train, val[, test]) datasets; returns (model, history)."""
    train_set, val_set = datasets[0], datasets[1]
    trainer = Trainer(model, train_set, val_set, config, objective=objective, parameters=parameters)
    history = trainer.run()
    return trainer.model, history
