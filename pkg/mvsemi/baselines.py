"""Comparison methods sharing the training and evaluation harness.

* ``base``: one supervised classifier per view, logits averaged over present views
* ``mvae``: unsupervised multi-view VAE, then an MLP on the fused posterior mean
* ``deepimv_style``: the multi-view model trained on labeled samples with the
  information-bottleneck loss only
* ``ours_no_cvmi``: the full objective without the contrastive term
* ``ours``: the full objective
"""
from __future__ import absolute_import, division

from dataclasses import replace
from enum import Enum
import logging

import torch
from torch import nn
import torch.nn.functional as F

from mvsemi.dataset import Batch
from mvsemi.helpers import torch_dtype
from mvsemi.losses import LossBreakdown, scalar
from mvsemi.model import ModelConfig, MultiViewModel, _mlp, view_network
from mvsemi.trainer import TrainConfig, Trainer

logger = logging.getLogger(__name__)

MVAE_CLASSIFIER_HIDDEN = [128, 128]


class BaselineKind(Enum):
    BASE = "base"
    MVAE = "mvae"
    DEEPIMV_STYLE = "deepimv_style"
    OURS_NO_CVMI = "ours_no_cvmi"
    OURS = "ours"


# row order of comparison tables
REPORT_ORDER = (BaselineKind.BASE, BaselineKind.MVAE, BaselineKind.DEEPIMV_STYLE,
                BaselineKind.OURS_NO_CVMI, BaselineKind.OURS)
DISPLAY_NAMES = {
    BaselineKind.BASE: "Base",
    BaselineKind.MVAE: "MVAE",
    BaselineKind.DEEPIMV_STYLE: "DeepIMV",
    BaselineKind.OURS_NO_CVMI: "Ours−L_cvmi",
    BaselineKind.OURS: "Ours",
}
# loss weights each method fixes regardless of the configured ones
METHOD_WEIGHTS = {
    BaselineKind.BASE: {},
    BaselineKind.MVAE: {"alpha": 0.0, "gamma": 0.0},
    BaselineKind.DEEPIMV_STYLE: {"alpha": 0.0, "gamma": 1.0},
    BaselineKind.OURS_NO_CVMI: {"alpha": 0.0},
    BaselineKind.OURS: {},
}


def _require_labels(dataset):
    if dataset.num_labeled == 0:
        raise ValueError("No supervision available: the train split has no labels.")


# ---------------------------------------------------------------- Base

class BaseClassifiers(nn.Module):

    """Independent deterministic classifier per view.

    A view without labeled training samples stays untrained and is ignored at
    inference.
    """

    def __init__(self, schema, config=None):
        super(BaseClassifiers, self).__init__()
        config = config or ModelConfig()
        config.validate()
        self.schema = schema
        self.config = config
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(config.seed)
            self.classifiers = nn.ModuleList([
                view_network(schema, v, config, schema.num_classes) for v in range(schema.num_views)])
        self.register_buffer("trained", torch.zeros(schema.num_views, dtype=torch.bool))
        self.to(torch_dtype(config.dtype))

    @property
    def dtype(self):
        return torch_dtype(self.config.dtype)

    def view_logits(self, v, x):
        return self.classifiers[v](torch.as_tensor(x, dtype=self.dtype))

    def predict_logits(self, batch):
        """Mean over present, trained views of per-view logits."""
        usable = batch.present & self.trained.unsqueeze(0)
        if not usable.any(dim=1).all():
            raise ValueError("Some samples have no present view with a trained classifier.")
        total = torch.zeros((len(batch), self.schema.num_classes), dtype=self.dtype)
        for v in range(self.schema.num_views):
            rows = usable[:, v].nonzero(as_tuple=True)[0]
            if rows.numel():
                total = total.index_add(0, rows, self.view_logits(v, batch.views[v][rows]))
        return total / usable.sum(dim=1, keepdim=True).to(self.dtype)

    def predict_proba(self, batch):
        with torch.no_grad():
            return torch.softmax(self.predict_logits(batch), dim=-1)

    def config_dict(self):
        return {"model": self.config.to_dict()}

    @classmethod
    def from_config_dict(cls, schema, payload):
        return cls(schema, ModelConfig.from_dict(payload["model"]))


def base_objective(model, batch, generator=None):
    """Sum over views of the mean cross-entropy on (present view, label) rows."""
    labeled = batch.labeled
    loss = torch.zeros((), dtype=model.dtype)
    ce_terms = []
    for v in range(model.schema.num_views):
        rows = labeled & batch.present[:, v]
        if rows.any():
            ce = F.cross_entropy(model.view_logits(v, batch.views[v][rows]), batch.labels[rows])
            loss = loss + ce
            ce_terms.append(scalar(ce))
    breakdown = LossBreakdown(
        cross_entropy=sum(ce_terms) / len(ce_terms) if ce_terms else 0.0,
        total=scalar(loss),
        n_labeled=int(labeled.sum()),
        n_unlabeled=int((~labeled).sum()),
    )
    return loss, breakdown


def base_train(datasets, model_config=None, train_config=None):
    """Train one classifier per view on labeled samples; returns (model, history)."""
    train, val = datasets[0], datasets[1]
    _require_labels(train)
    labeled = train.labeled_subset()
    model = BaseClassifiers(train.schema, model_config)
    counts = labeled.present_mask.sum(axis=0)
    model.trained.copy_(torch.as_tensor(counts > 0))
    for v in range(train.schema.num_views):
        if not counts[v]:
            logger.warning("View %d has no labeled samples; its classifier is left untrained", v)
    trainer = Trainer(model, labeled, val, train_config or TrainConfig(), objective=base_objective)
    history = trainer.run()
    return model, history


def base_predict(model, sample):
    """Class probabilities for one MultiViewSample."""
    batch = Batch.from_samples([sample], model.schema, dtype=model.dtype)
    return model.predict_proba(batch)[0].numpy()


# ---------------------------------------------------------------- MVAE

class MVAEPipeline(nn.Module):

    """Frozen generative model feeding an MLP classifier on the fused posterior mean."""

    def __init__(self, generative, classifier_hidden=None, seed=0):
        super(MVAEPipeline, self).__init__()
        self.generative = generative
        self.schema = generative.schema
        self.config = generative.config
        self.classifier_hidden = list(MVAE_CLASSIFIER_HIDDEN if classifier_hidden is None
                                      else classifier_hidden)
        self.classifier_seed = int(seed)
        for p in self.generative.parameters():
            p.requires_grad_(False)
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(self.classifier_seed)
            self.classifier = _mlp([generative.latent_dim] + self.classifier_hidden
                                   + [self.schema.num_classes])
        self.classifier.to(generative.dtype)

    @property
    def dtype(self):
        return self.generative.dtype

    def latent_means(self, batch):
        with torch.no_grad():
            return self.generative.posterior(batch)[1].mean

    def predict_logits(self, batch):
        return self.classifier(self.latent_means(batch))

    def predict_proba(self, batch):
        with torch.no_grad():
            return torch.softmax(self.predict_logits(batch), dim=-1)

    def config_dict(self):
        return {
            "model": self.config.to_dict(),
            "classifier_hidden": self.classifier_hidden,
            "classifier_seed": self.classifier_seed,
        }

    @classmethod
    def from_config_dict(cls, schema, payload):
        generative = MultiViewModel(schema, ModelConfig.from_dict(payload["model"]))
        return cls(generative, payload["classifier_hidden"], payload["classifier_seed"])


def mvae_objective(model, batch, generator=None):
    labeled = batch.labeled
    if not labeled.any():
        return torch.zeros((), dtype=model.dtype), LossBreakdown(n_unlabeled=len(batch))
    ce = F.cross_entropy(model.predict_logits(batch.index(labeled.nonzero(as_tuple=True)[0])),
                         batch.labels[labeled])
    breakdown = LossBreakdown(cross_entropy=scalar(ce), total=scalar(ce),
                              n_labeled=int(labeled.sum()), n_unlabeled=int((~labeled).sum()))
    return ce, breakdown


def mvae_pipeline(datasets, model_config=None, train_config=None):
    """Two-stage MVAE: ELBO-only training, then a classifier on frozen latents.

    Returns (pipeline, (stage-1 history, stage-2 history)).
    """
    train, val = datasets[0], datasets[1]
    _require_labels(train)
    model_config = replace(model_config or ModelConfig(), gamma=0.0, alpha=0.0)
    train_config = train_config or TrainConfig()
    generative = MultiViewModel(train.schema, model_config)
    stage1 = replace(train_config, gamma=0.0, alpha=0.0, unsup_weight=1.0, selection_metric="elbo")
    history1 = Trainer(generative, train, val, stage1).run()

    pipeline = MVAEPipeline(generative, seed=model_config.seed)
    stage2 = replace(train_config, selection_metric="auto")
    history2 = Trainer(pipeline, train.labeled_subset(), val, stage2, objective=mvae_objective,
                       parameters=pipeline.classifier.parameters()).run()
    return pipeline, (history1, history2)


# ---------------------------------------------------------------- model variants

def deepimv_style_train(datasets, model_config=None, train_config=None):
    """Supervised-only training of the multi-view model on labeled samples."""
    train, val = datasets[0], datasets[1]
    _require_labels(train)
    model_config = replace(model_config or ModelConfig(), gamma=1.0, alpha=0.0)
    train_config = replace(train_config or TrainConfig(), gamma=1.0, alpha=0.0, unsup_weight=0.0)
    model = MultiViewModel(train.schema, model_config)
    history = Trainer(model, train.labeled_subset(), val, train_config).run()
    return model, history


def ours_train(datasets, model_config=None, train_config=None, use_cvmi=True):
    train, val = datasets[0], datasets[1]
    model_config = model_config or ModelConfig()
    train_config = train_config or TrainConfig()
    if not use_cvmi:
        model_config = replace(model_config, alpha=0.0)
        train_config = replace(train_config, alpha=0.0)
    model = MultiViewModel(train.schema, model_config)
    history = Trainer(model, train, val, train_config).run()
    return model, history


def run_method(kind, datasets, model_config=None, train_config=None):
    """Train the method ``kind`` and return (predictor, history)."""
    kind = BaselineKind(kind)
    logger.info("Training method {}".format(kind.value))
    if kind is BaselineKind.BASE:
        return base_train(datasets, model_config, train_config)
    if kind is BaselineKind.MVAE:
        pipeline, (_, history) = mvae_pipeline(datasets, model_config, train_config)
        return pipeline, history
    if kind is BaselineKind.DEEPIMV_STYLE:
        return deepimv_style_train(datasets, model_config, train_config)
    return ours_train(datasets, model_config, train_config, use_cvmi=kind is BaselineKind.OURS)
