"""Training objective over mixed labeled/unlabeled batches with missing views.

total = unsup_weight * L_unsup + gamma * L_sup + alpha * L_cvmi

where L_unsup is the negative ELBO of the observed views, L_sup the
information-bottleneck classification loss and L_cvmi the negated contrastive
estimate of mutual information between per-view latents.
"""
from __future__ import absolute_import, division

from dataclasses import dataclass, field
from itertools import combinations
import math

import torch
import torch.nn.functional as F

from mvsemi.gaussian import kl_to_standard, reparam_sample


@dataclass
class LossBreakdown(object):

    recon_per_view: list = field(default_factory=list)
    kl_joint: float = 0.0
    kl_per_view: list = field(default_factory=list)
    cross_entropy: float = 0.0
    cvmi: float = 0.0
    unsup: float = 0.0
    sup: float = 0.0
    total: float = 0.0
    n_labeled: int = 0
    n_unlabeled: int = 0
    n_pairs: int = 0

    def is_finite(self):
        values = [self.kl_joint, self.cross_entropy, self.cvmi, self.total]
        values += list(self.recon_per_view) + list(self.kl_per_view)
        return all(math.isfinite(x) for x in values)

    def to_record(self, step=None):
        """One JSON-lines record of the step."""
        record = {
            "recon": [float(x) for x in self.recon_per_view],
            "kl_joint": float(self.kl_joint),
            "kl_view": [float(x) for x in self.kl_per_view],
            "ce": float(self.cross_entropy),
            "cvmi": float(self.cvmi),
            "total": float(self.total),
            "n_labeled": int(self.n_labeled),
            "n_unlabeled": int(self.n_unlabeled),
            "n_pairs": int(self.n_pairs),
        }
        if step is not None:
            record["step"] = int(step)
        return record


class LatentDraws(object):

    """One forward pass: per-view posteriors, their fusion and the shared draws.

    ``z`` is one reparameterized draw from the fused posterior per sample and
    ``view_z[v]`` one draw from q(z_v | x_v) per sample; rows of absent views
    carry placeholder draws that no loss reads.
    """

    def __init__(self, posteriors, fused, z, view_z, present):
        self.posteriors = posteriors
        self.present = present
        self.fused = fused
        self.z = z
        self.view_z = view_z


def draw_noise(model, batch, generator=None):
    """Standard normal noise for one forward pass: fused (B, D), per-view (V, B, D)."""
    shape = (len(batch), model.latent_dim)
    fused = torch.randn(shape, generator=generator, dtype=model.dtype)
    views = torch.randn((model.schema.num_views,) + shape, generator=generator, dtype=model.dtype)
    return fused, views


def forward_pass(model, batch, noise=None, generator=None):
    if noise is None:
        noise = draw_noise(model, batch, generator)
    fused_noise, view_noise = noise
    posteriors, fused = model.posterior(batch)
    z = reparam_sample(fused, fused_noise)
    view_z = [reparam_sample(q, view_noise[v]) for v, q in enumerate(posteriors)]
    return LatentDraws(posteriors, fused, z, view_z, batch.present)


def _check_labels(batch, num_classes):
    labels = batch.labels
    bad = (labels < -1) | (labels >= num_classes)
    if bad.any():
        raise ValueError("Labels {} lie outside [0, {})".format(
            sorted(set(labels[bad].tolist())), num_classes))


def _zero(model):
    return torch.zeros((), dtype=model.dtype)


def scalar(value):
    """Python float of a loss term, detached from the graph."""
    if torch.is_tensor(value):
        return value.detach().item()
    return float(value)


def _per_view_kl(model, draws, rows):
    """Per-view mean KL over present (row, view) pairs, and their pooled mean."""
    total, count, per_view = _zero(model), 0, []
    for v, q in enumerate(draws.posteriors):
        present = rows & draws.present[:, v]
        n = int(present.sum())
        if n:
            kl = kl_to_standard(q[present])
            total = total + kl.sum()
            per_view.append(scalar(kl.mean()))
            count += n
        else:
            per_view.append(0.0)
    return (total / count if count else total), per_view


def supervised_ib_loss(model, batch, draws=None, generator=None):
    """CE + beta * KL(fused) averaged over labeled samples, plus beta times the
    mean per-view KL over present (labeled sample, view) pairs.

    Returns the loss and a dict of its terms. A batch without labels gives 0.
    """
    _check_labels(batch, model.schema.num_classes)
    labeled = batch.labeled
    n_labeled = int(labeled.sum())
    terms = {"cross_entropy": 0.0, "kl_joint": 0.0,
             "kl_per_view": [0.0] * model.schema.num_views, "n_labeled": n_labeled}
    if not n_labeled:
        return _zero(model), terms
    if draws is None:
        draws = forward_pass(model, batch, generator=generator)
    beta = model.config.beta
    logits = model.predict_logits(draws.z[labeled])
    ce = F.cross_entropy(logits, batch.labels[labeled], reduction="mean")
    kl_joint = kl_to_standard(draws.fused[labeled]).mean()
    kl_view, per_view = _per_view_kl(model, draws, labeled)
    loss = ce + beta * kl_joint + beta * kl_view
    terms.update(cross_entropy=scalar(ce), kl_joint=scalar(kl_joint), kl_per_view=per_view)
    return loss, terms


def unsupervised_elbo_loss(model, batch, draws=None, generator=None, include_labeled=None):
    """Mean negative ELBO over the batch.

    Each included sample contributes -sum over present views of log p(x_v | z)
    plus beta * KL(fused || prior). Labeled samples are included unless the
    model config (or ``include_labeled``) says otherwise.
    """
    if include_labeled is None:
        include_labeled = model.config.unsup_on_labeled
    rows = torch.ones(len(batch), dtype=torch.bool) if include_labeled else ~batch.labeled
    n_rows = int(rows.sum())
    V = model.schema.num_views
    terms = {"recon_per_view": [0.0] * V, "kl_joint": 0.0, "kl_per_view": [0.0] * V,
             "n_included": n_rows}
    if not n_rows:
        return _zero(model), terms
    if draws is None:
        draws = forward_pass(model, batch, generator=generator)
    beta = model.config.beta
    nll = _zero(model)
    for v in range(V):
        present = rows & batch.present[:, v]
        if not present.any():
            continue
        raw = model.decode_raw(v, draws.z[present])
        view_nll = -model.view_log_likelihood(v, raw, batch.views[v][present]).sum()
        nll = nll + view_nll
        terms["recon_per_view"][v] = scalar(view_nll) / n_rows
    kl_joint = kl_to_standard(draws.fused[rows]).mean()
    loss = nll / n_rows + beta * kl_joint
    terms["kl_joint"] = scalar(kl_joint)
    if model.config.view_kl_in_unsup:
        kl_view, terms["kl_per_view"] = _per_view_kl(model, draws, rows)
        loss = loss + beta * kl_view
    return loss, terms


def infonce_pair(z_i, z_j, temperature=1.0):
    """Symmetrized contrastive estimate of I(z_i; z_j) over m aligned rows.

    For an anchor row, the aligned row of the other batch is the positive and
    the remaining m - 1 rows are negatives; the affinity is exp(cosine /
    temperature). Returns None when m < 2.
    """
    if z_i.shape != z_j.shape or z_i.dim() != 2:
        raise ValueError("Expected two aligned (m, D) batches, got {} and {}".format(
            tuple(z_i.shape), tuple(z_j.shape)))
    if z_i.shape[0] < 2:
        return None
    norms_i = z_i.norm(dim=1)
    norms_j = z_j.norm(dim=1)
    if (norms_i == 0).any() or (norms_j == 0).any():
        raise ValueError("Latent rows must be nonzero for cosine affinity.")
    cosine = (z_i / norms_i[:, None]) @ (z_j / norms_j[:, None]).t() / temperature
    forward = torch.log_softmax(cosine, dim=1).diagonal().mean()
    backward = torch.log_softmax(cosine, dim=0).diagonal().mean()
    return 0.5 * (forward + backward)


def cvmi_loss(per_view_latents, mask, temperature=1.0):
    """Negated InfoNCE averaged over unordered view pairs.

    A pair contributes only when at least two samples have both views present.
    Returns the loss and the number of contributing pairs; no pair gives 0.
    """
    mask = torch.as_tensor(mask, dtype=torch.bool)
    terms = []
    for i, j in combinations(range(len(per_view_latents)), 2):
        both = mask[:, i] & mask[:, j]
        estimate = infonce_pair(per_view_latents[i][both], per_view_latents[j][both], temperature)
        if estimate is not None:
            terms.append(-estimate)
    if not terms:
        return torch.zeros((), dtype=per_view_latents[0].dtype), 0
    return torch.stack(terms).mean(), len(terms)


def total_loss(model, batch, gamma=None, alpha=None, generator=None, unsup_weight=1.0, draws=None):
    """Combined objective with one latent draw per sample shared by every term."""
    gamma = model.config.gamma if gamma is None else gamma
    alpha = model.config.alpha if alpha is None else alpha
    if not len(batch):
        raise ValueError("total_loss needs a nonempty batch")
    if draws is None:
        draws = forward_pass(model, batch, generator=generator)
    unsup, unsup_terms = unsupervised_elbo_loss(model, batch, draws=draws)
    sup, sup_terms = supervised_ib_loss(model, batch, draws=draws)
    cvmi, n_pairs = cvmi_loss(draws.view_z, batch.present, model.config.temperature)
    total = unsup_weight * unsup + gamma * sup + alpha * cvmi

    kl_per_view = sup_terms["kl_per_view"]
    if model.config.view_kl_in_unsup:
        kl_per_view = [a + b for a, b in zip(kl_per_view, unsup_terms["kl_per_view"])]
    breakdown = LossBreakdown(
        recon_per_view=unsup_terms["recon_per_view"],
        kl_joint=unsup_terms["kl_joint"] if unsup_terms["n_included"] else sup_terms["kl_joint"],
        kl_per_view=kl_per_view,
        cross_entropy=sup_terms["cross_entropy"],
        cvmi=scalar(cvmi),
        unsup=scalar(unsup),
        sup=scalar(sup),
        total=scalar(total),
        n_labeled=sup_terms["n_labeled"],
        n_unlabeled=len(batch) - sup_terms["n_labeled"],
        n_pairs=n_pairs,
    )
    return total, breakdown
