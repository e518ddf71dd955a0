"""Contrastive pre-training for the GCN backbone.

Two objectives are supported:

* ``graphcl``: each graph yields two stochastically augmented views and the
  encoder pulls matching views together under NT-Xent.
* ``simgrace``: the second view comes from a weight-perturbed copy of the
  encoder applied to the unaugmented graph, so no augmentation choices are
  needed.

All stochasticity (augmentation draws, batch order, weight noise) flows
through numpy generators derived from the config seed, which keeps runs
bit-reproducible for a fixed seed.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np
import torch

from .backbone import GCNBackbone, PreparedBatch
from .data import AUGMENT_KINDS, Dataset, augment
from .errors import NumericError, ValidationError
from .seeding import as_rng

logger = logging.getLogger(__name__)

OBJECTIVES = ("graphcl", "simgrace")


@dataclass
class PretrainConfig:
    objective: str = "graphcl"
    epochs: int = 50
    batch_size: int = 32
    temperature: float = 0.5
    learning_rate: float = 1e-3
    aug_1: tuple = ("drop_edges", 0.2)
    aug_2: tuple = ("mask_features", 0.2)
    perturb_scale: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.objective not in OBJECTIVES:
            raise ValidationError(f"unknown pretrain objective {self.objective!r}")
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if self.batch_size < 2:
            raise ValidationError("batch_size must be >= 2 for contrastive batches")
        if self.temperature <= 0:
            raise ValidationError("temperature must be positive")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if self.perturb_scale < 0:
            raise ValidationError("perturb_scale must be >= 0")
        for name, (kind, ratio) in (("aug_1", self.aug_1), ("aug_2", self.aug_2)):
            if kind not in AUGMENT_KINDS:
                raise ValidationError(f"{name}: unknown augmentation {kind!r}")
            if not 0.0 <= float(ratio) <= 1.0:
                raise ValidationError(f"{name}: ratio must be in [0, 1]")


def nt_xent_loss(z_a: torch.Tensor, z_b: torch.Tensor, temperature: float) -> torch.Tensor:
    """Normalized-temperature cross entropy over a batch of paired views.

    Rows of `z_a` and `z_b` at the same index are positives; every other row
    in the concatenated 2B batch is a negative. Similarity is cosine over
    rows, scaled by `temperature`.
    """
    if temperature <= 0:
        raise ValidationError("temperature must be positive")
    if z_a.ndim != 2 or z_a.shape != z_b.shape:
        raise ValidationError("view batches must be 2-d with matching shapes")
    b = z_a.shape[0]
    z = torch.cat([z_a, z_b], dim=0)
    norms = z.norm(dim=1)
    if bool((norms < 1e-12).any()):
        raise NumericError("zero-norm embedding row; cosine similarity undefined")
    zn = z / norms.unsqueeze(1)
    sim = (zn @ zn.T) / temperature
    eye = torch.eye(2 * b, dtype=torch.bool)
    sim = sim.masked_fill(eye, float("-inf"))  # self-pairs are never candidates
    log_denom = torch.logsumexp(sim, dim=1)
    pos = torch.arange(2 * b).roll(-b)  # i pairs with i+B (mod 2B)
    log_num = sim[torch.arange(2 * b), pos]
    loss = (log_denom - log_num).mean()
    if not torch.isfinite(loss):
        raise NumericError("non-finite contrastive loss")
    return loss


def _batched_indices(order: np.ndarray, batch_size: int):
    chunks = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    # A trailing singleton has no negatives; fold it into the previous batch.
    if len(chunks) > 1 and len(chunks[-1]) < 2:
        chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
        chunks.pop()
    return [c for c in chunks if len(c) >= 2]


def _log_epoch(log_file, epoch: int, mean_loss: float) -> None:
    logger.info("pretrain epoch %d mean_loss %.6f", epoch, mean_loss)
    if log_file is not None:
        with open(log_file, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"epoch": epoch, "mean_loss": mean_loss},
                                sort_keys=True) + "\n")


def _check_trainable(model: GCNBackbone, dataset: Dataset) -> None:
    if model.frozen:
        raise ValidationError("cannot pre-train a frozen backbone")
    if not dataset.graphs:
        raise ValidationError("cannot pre-train on an empty dataset")
    if dataset.feature_dim != model.feature_dim:
        raise ValidationError(
            f"dataset feature_dim {dataset.feature_dim} does not match "
            f"backbone feature_dim {model.feature_dim}")


def pretrain_graphcl(dataset: Dataset, model: GCNBackbone, config: PretrainConfig,
                     log_file=None):
    """Train `model` in place with two augmented views per graph.

    Returns `(model, trace)` where `trace` holds the mean batch loss per
    epoch.
    """
    config.validate()
    _check_trainable(model, dataset)
    rng = as_rng(config.seed)
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    kind_1, ratio_1 = config.aug_1
    kind_2, ratio_2 = config.aug_2
    trace = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(dataset.graphs))
        losses = []
        for batch in _batched_indices(order, config.batch_size):
            graphs = [dataset.graphs[i] for i in batch]
            views_a = [augment(g, kind_1, ratio_1, rng) for g in graphs]
            views_b = [augment(g, kind_2, ratio_2, rng) for g in graphs]
            z_a = PreparedBatch(views_a).embed(model)
            z_b = PreparedBatch(views_b).embed(model)
            loss = nt_xent_loss(z_a, z_b, config.temperature)
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.detach()))
        mean_loss = float(np.mean(losses)) if losses else math.nan
        trace.append(mean_loss)
        _log_epoch(log_file, epoch, mean_loss)
    return model, trace


def _perturbed_weights(model: GCNBackbone, scale: float, rng: np.random.Generator):
    """Layer matrices W + eps with eps ~ N(0, scale * std(W)) per layer.

    The noise is a detached constant, so gradients through the perturbed
    view still reach the original parameters.
    """
    weights = []
    for w in model.layers:
        sigma = scale * float(w.detach().std())
        noise = torch.from_numpy(rng.standard_normal(tuple(w.shape)) * sigma)
        weights.append(w + noise)
    return weights


def pretrain_simgrace(dataset: Dataset, model: GCNBackbone, config: PretrainConfig,
                      log_file=None):
    """Train `model` in place against a weight-perturbed copy of itself.

    Both views see the unaugmented graphs; the second view runs with layer
    weights W + eps where eps is resampled per batch. Returns `(model,
    trace)` like `pretrain_graphcl`.
    """
    config.validate()
    _check_trainable(model, dataset)
    rng = as_rng(config.seed)
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    trace = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(dataset.graphs))
        losses = []
        for batch in _batched_indices(order, config.batch_size):
            prep = PreparedBatch([dataset.graphs[i] for i in batch])
            z_a = prep.embed(model)
            z_b = prep.embed(model, weights=_perturbed_weights(
                model, config.perturb_scale, rng))
            loss = nt_xent_loss(z_a, z_b, config.temperature)
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.detach()))
        mean_loss = float(np.mean(losses)) if losses else math.nan
        trace.append(mean_loss)
        _log_epoch(log_file, epoch, mean_loss)
    return model, trace


def pretrain(dataset: Dataset, model: GCNBackbone, config: PretrainConfig,
             log_file=None):
    """Dispatch to the configured objective."""
    config.validate()
    if config.objective == "graphcl":
        return pretrain_graphcl(dataset, model, config, log_file=log_file)
    return pretrain_simgrace(dataset, model, config, log_file=log_file)
