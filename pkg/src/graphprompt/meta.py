"""Meta-learned prompt initialization over a distribution of tasks.

The outer loop owns a shared (prompt, head) initialization. Each outer
step samples a batch of episodes, adapts a copy of the initialization to
every episode's support set with a few plain gradient steps, measures the
query loss at the adapted parameters, and applies the averaged first-order
query gradient to the shared initialization. Few inner steps then suffice
to adapt the learned initialization to unseen tasks.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
import torch

from .backbone import GCNBackbone
from .errors import ContractError, NumericError, ValidationError
from .prompt import PromptGraph, TaskHead, labels_to_tensor, prompted_set
from .seeding import as_rng

logger = logging.getLogger(__name__)


@dataclass
class MetaConfig:
    inner_steps: int = 5
    inner_lr: float = 0.01
    outer_lr: float = 0.001
    meta_batch: int = 4
    outer_steps: int = 100
    first_order: bool = True
    seed: int = 0

    def validate(self) -> None:
        if min(self.inner_steps, self.meta_batch, self.outer_steps) < 0:
            raise ValidationError("meta counts must be >= 0")
        if self.meta_batch < 1:
            raise ValidationError("meta_batch must be >= 1")
        if self.inner_lr <= 0 or self.outer_lr <= 0:
            raise ValidationError("learning rates must be positive")
        if not self.first_order:
            raise ValidationError(
                "second-order meta-gradients are not supported; keep first_order=True")


def sgd_step(params, lr: float) -> None:
    """One plain gradient-descent update; consumes and clears .grad."""
    with torch.no_grad():
        for p in params:
            if p.grad is not None:
                p.add_(p.grad, alpha=-lr)
    for p in params:
        if p.grad is not None:
            p.grad.zero_()


def _pairs_loss(prompt: PromptGraph, head: TaskHead, pairs, model: GCNBackbone):
    graphs = [g for g, _ in pairs]
    labels = labels_to_tensor(head, [y for _, y in pairs])
    z = prompted_set(prompt, graphs).embed(prompt, model)
    return head.loss(head.logits(z), labels)


def _require_frozen(model: GCNBackbone) -> None:
    if not model.frozen:
        raise ContractError("meta-learning requires a frozen backbone")


def inner_adapt(prompt: PromptGraph, head: TaskHead, episode, frozen_model: GCNBackbone,
                steps: int, lr: float):
    """Adapt copies of (prompt, head) to one episode's support set.

    Plain gradient descent; the originals are never touched. Returns the
    best-loss iterate and the loss trace (initial loss included).
    """
    _require_frozen(frozen_model)
    if steps < 0:
        raise ValidationError("steps must be >= 0")
    if lr <= 0:
        raise ValidationError("lr must be positive")
    a_prompt, a_head = prompt.copy(), head.copy()
    if steps == 0:
        return a_prompt, a_head, []
    if not episode.support:
        raise ValidationError("episode has an empty support set")
    params = list(a_prompt.parameters()) + list(a_head.parameters())
    trace = []
    best = (float("inf"), None)
    for step in range(steps + 1):
        loss = _pairs_loss(a_prompt, a_head, episode.support, frozen_model)
        value = float(loss.detach())
        if not np.isfinite(value):
            raise NumericError(f"non-finite inner loss at step {step}")
        trace.append(value)
        if value < best[0]:
            best = (value, [p.detach().clone() for p in params])
        if step == steps:
            break
        loss.backward()
        sgd_step(params, lr)
    with torch.no_grad():
        for p, s in zip(params, best[1]):
            p.copy_(s)
    return a_prompt, a_head, trace


def as_task_sampler(source):
    """Wrap a list of episodes (or pass through a callable) as sampler(rng)."""
    if callable(source):
        return source
    episodes = list(source)
    if not episodes:
        raise ValidationError("task sampler has no episodes")

    def sampler(rng):
        return episodes[int(rng.integers(len(episodes)))]

    return sampler


def meta_train(prompt: PromptGraph, head: TaskHead, task_sampler,
               frozen_model: GCNBackbone, config: MetaConfig, log_file=None):
    """First-order meta-training of the shared (prompt, head) initialization.

    Mutates `prompt` and `head` in place across outer steps; returns them
    with the outer query-loss trace.
    """
    config.validate()
    _require_frozen(frozen_model)
    sampler = as_task_sampler(task_sampler)
    if config.outer_steps == 0:
        return prompt, head, []
    rng = as_rng(config.seed)
    params = list(prompt.parameters()) + list(head.parameters())
    opt = torch.optim.Adam(params, lr=config.outer_lr)
    before = frozen_model.fingerprint()
    trace = []
    for step in range(config.outer_steps):
        episodes = [sampler(rng) for _ in range(config.meta_batch)]
        grads = [torch.zeros_like(p) for p in params]
        query_losses = []
        for ep in episodes:
            if not ep.query:
                raise ValidationError("meta-training episodes need query sets")
            a_prompt, a_head, _ = inner_adapt(
                prompt, head, ep, frozen_model, config.inner_steps, config.inner_lr)
            a_params = list(a_prompt.parameters()) + list(a_head.parameters())
            q_loss = _pairs_loss(a_prompt, a_head, ep.query, frozen_model)
            gs = torch.autograd.grad(q_loss, a_params, allow_unused=True)
            for acc, g in zip(grads, gs):
                if g is not None:
                    acc += g
            query_losses.append(float(q_loss.detach()))
        mean_q = float(np.mean(query_losses))
        if not np.isfinite(mean_q):
            raise NumericError(f"non-finite query loss at outer step {step}")
        trace.append(mean_q)
        opt.zero_grad()
        for p, g in zip(params, grads):
            p.grad = g / len(episodes)
        opt.step()
        logger.info("meta outer step %d mean_query_loss %.6f", step, mean_q)
        if log_file is not None:
            with open(log_file, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({"outer_step": step, "mean_query_loss": mean_q},
                                    sort_keys=True) + "\n")
    if frozen_model.fingerprint() != before:
        raise ContractError("backbone changed during meta-training")
    return prompt, head, trace
