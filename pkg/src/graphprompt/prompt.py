"""Prompt graph: learnable tokens inserted into input graphs.

A prompt graph is a small set of token vectors (same width as node
features), an optional structure among the tokens, and an insertion rule
that produces the manipulated graph fed to the frozen backbone:

* ``weighted_feature_add``: each node receives a weighted sum of tokens,
  with weights sigma(p_k . x_i) hard-thresholded at delta.
* ``simple_feature_add``: each node receives the plain token sum.
* ``subgraph``: tokens become extra nodes, wired to each other by the
  token structure and to data nodes wherever the thresholded weight
  survives; all inserted edges are unweighted.

Hard thresholds are kept exact at forward time; gradients flow through the
surviving sigmoid values only (the gate itself is detached).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .backbone import DTYPE, GCNBackbone, PreparedBatch, graph_tensors
from .checkpoint import read_checkpoint, write_checkpoint
from .data import Graph
from .errors import ContractError, NumericError, ValidationError
from .seeding import as_rng

logger = logging.getLogger(__name__)

STRUCTURE_MODES = ("learnable", "dot_threshold", "independent")
INSERT_MODES = ("weighted_feature_add", "simple_feature_add", "subgraph")
HEAD_KINDS = ("classify", "regress", "link_score")
LABEL_MODES = ("multiclass_softmax", "multilabel_sigmoid")


def _pair_index(num_tokens: int):
    """Lexicographic (i, j) pairs with i < j; fixes structure_params order."""
    return [(i, j) for i in range(num_tokens) for j in range(i + 1, num_tokens)]


class PromptGraph(nn.Module):
    """Token set, token structure, and insertion rule."""

    def __init__(self, tokens: np.ndarray, structure_mode: str, insert_mode: str,
                 delta: float = 0.5, structure_params: Optional[np.ndarray] = None):
        super().__init__()
        if structure_mode not in STRUCTURE_MODES:
            raise ValidationError(f"unknown structure_mode {structure_mode!r}")
        if insert_mode not in INSERT_MODES:
            raise ValidationError(f"unknown insert_mode {insert_mode!r}")
        if not 0.0 < delta < 1.0:
            raise ValidationError("delta must lie strictly inside (0, 1)")
        tokens = np.asarray(tokens, dtype=np.float64)
        if tokens.ndim != 2 or tokens.shape[0] < 1 or tokens.shape[1] < 1:
            raise ValidationError("tokens must be a non-empty 2-d matrix")
        self.structure_mode = structure_mode
        self.insert_mode = insert_mode
        self.delta = float(delta)
        self.tokens = nn.Parameter(torch.from_numpy(tokens.copy()))
        n_pairs = tokens.shape[0] * (tokens.shape[0] - 1) // 2
        if structure_mode == "learnable":
            if structure_params is None:
                structure_params = np.zeros(n_pairs, dtype=np.float64)
            structure_params = np.asarray(structure_params, dtype=np.float64)
            if structure_params.shape != (n_pairs,):
                raise ValidationError(
                    f"learnable mode needs {n_pairs} structure params, "
                    f"got shape {structure_params.shape}")
            self.structure_params = nn.Parameter(torch.from_numpy(structure_params.copy()))
        else:
            if structure_params is not None:
                raise ValidationError(
                    f"structure_params only exist in learnable mode, not {structure_mode!r}")
            self.structure_params = None

    @property
    def num_tokens(self) -> int:
        return self.tokens.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.tokens.shape[1]

    def config(self) -> dict:
        return {
            "structure_mode": self.structure_mode,
            "insert_mode": self.insert_mode,
            "delta": self.delta,
            "num_tokens": self.num_tokens,
            "feature_dim": self.feature_dim,
        }

    def token_soft_adjacency(self) -> torch.Tensor:
        """Pre-threshold pairwise connection strengths, (|P|, |P|), zero diagonal."""
        k = self.num_tokens
        soft = torch.zeros((k, k), dtype=DTYPE)
        if self.structure_mode == "independent" or k < 2:
            return soft
        if self.structure_mode == "learnable":
            vals = torch.sigmoid(self.structure_params)
            rows, cols = zip(*_pair_index(k))
            soft = soft.index_put((torch.tensor(rows), torch.tensor(cols)), vals)
            return soft + soft.T
        scores = torch.sigmoid(self.tokens @ self.tokens.T)
        return scores * (1.0 - torch.eye(k, dtype=DTYPE))

    def copy(self) -> "PromptGraph":
        params = None
        if self.structure_params is not None:
            params = self.structure_params.detach().numpy().copy()
        return PromptGraph(self.tokens.detach().numpy().copy(), self.structure_mode,
                           self.insert_mode, self.delta, params)


def init_prompt(num_tokens: int, feature_dim: int, structure_mode: str = "learnable",
                insert_mode: str = "weighted_feature_add", delta: float = 0.5,
                rng=None, init_std: float = 0.02) -> PromptGraph:
    """Fresh prompt: Gaussian tokens (std 0.02), structure params at zero."""
    if num_tokens < 1:
        raise ValidationError("num_tokens must be >= 1")
    if feature_dim < 1:
        raise ValidationError("feature_dim must be >= 1")
    rng = as_rng(rng)
    tokens = rng.standard_normal((num_tokens, feature_dim)) * init_std
    return PromptGraph(tokens, structure_mode, insert_mode, delta)


def token_structure(prompt: PromptGraph) -> set:
    """Token-index pairs (i, j), i < j, whose connection survives the threshold."""
    soft = prompt.token_soft_adjacency().detach().numpy()
    return {(i, j) for i, j in _pair_index(prompt.num_tokens)
            if soft[i, j] > prompt.delta}


def _gated_weights(x: torch.Tensor, prompt: PromptGraph) -> torch.Tensor:
    """w_ik = sigma(p_k . x_i) where it exceeds delta, else exactly 0."""
    soft = torch.sigmoid(x @ prompt.tokens.T)
    gate = (soft > prompt.delta).to(DTYPE).detach()
    return soft * gate


def _straight_through_gate(soft: torch.Tensor, delta: float) -> torch.Tensor:
    """Exact 0/1 edge existence; gradient through surviving sigmoids only."""
    gate = (soft > delta).to(DTYPE).detach()
    return gate + (soft - soft.detach()) * gate


def insert_features(prompt: PromptGraph, x: torch.Tensor,
                    mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Differentiable feature-add insertion on (n, d) or padded (B, n, d).

    `mask` (matching leading dims of `x`) keeps padded rows at zero so
    batched results agree with per-graph insertion.
    """
    if prompt.insert_mode == "simple_feature_add":
        bump = prompt.tokens.sum(dim=0)
        shift = bump if mask is None else mask.unsqueeze(-1) * bump
        return x + shift
    if prompt.insert_mode == "weighted_feature_add":
        w = _gated_weights(x, prompt)
        if mask is not None:
            w = w * mask.unsqueeze(-1)
        return x + w @ prompt.tokens
    raise ValidationError("insert_features only applies to feature-add modes")


def combined_tensors(prompt: PromptGraph, x: torch.Tensor, adj: torch.Tensor):
    """Subgraph-mode tensors: features (n+|P|, d) and 0/1 adjacency.

    Data-data block is the original adjacency; cross and token-token blocks
    are straight-through gated so edge existence stays exact while
    gradients reach tokens and structure params.
    """
    cross = _straight_through_gate(torch.sigmoid(x @ prompt.tokens.T), prompt.delta)
    tok = _straight_through_gate(prompt.token_soft_adjacency(), prompt.delta)
    k = prompt.num_tokens
    tok = tok * (1.0 - torch.eye(k, dtype=DTYPE))  # no token self-loops
    top = torch.cat([adj, cross], dim=1)
    bottom = torch.cat([cross.T, tok], dim=1)
    comb_adj = torch.cat([top, bottom], dim=0)
    comb_x = torch.cat([x, prompt.tokens], dim=0)
    return comb_x, comb_adj


def _check_host(prompt: PromptGraph, graph: Graph) -> None:
    if prompt.feature_dim != graph.feature_dim:
        raise ValidationError(
            f"prompt dimension {prompt.feature_dim} does not match "
            f"graph feature_dim {graph.feature_dim}")
    if prompt.num_tokens >= graph.node_count:
        logger.warning("prompt has %d tokens but host graph only %d nodes; "
                       "token sets are expected to be much smaller than graphs",
                       prompt.num_tokens, graph.node_count)


def insert(prompt: PromptGraph, graph: Graph) -> Graph:
    """Manipulated graph: feature-add modifies features, subgraph adds nodes."""
    _check_host(prompt, graph)
    x, adj = graph_tensors(graph)
    if prompt.insert_mode in ("weighted_feature_add", "simple_feature_add"):
        with torch.no_grad():
            feats = insert_features(prompt, x).numpy()
        return Graph(features=feats, edges=list(graph.edges),
                     node_labels=None if graph.node_labels is None else graph.node_labels.copy(),
                     edge_labels=None if graph.edge_labels is None else dict(graph.edge_labels),
                     graph_label=graph.graph_label,
                     node_ids=None if graph.node_ids is None else graph.node_ids.copy())
    with torch.no_grad():
        comb_x, comb_adj = combined_tensors(prompt, x, adj)
    n = graph.node_count
    k = prompt.num_tokens
    a = comb_adj.numpy()
    edges = list(graph.edges)
    for i in range(n + k):
        for j in range(i + 1, n + k):
            if j >= n and a[i, j] > 0:
                edges.append((i, j))
    labels = None
    if graph.node_labels is not None:
        labels = np.concatenate([graph.node_labels,
                                 np.full(k, -1, dtype=np.int64)])  # tokens carry no label
    ids = None
    if graph.node_ids is not None:
        # token rows carry no provenance; -1 mirrors the unlabeled sentinel
        ids = np.concatenate([graph.node_ids, np.full(k, -1, dtype=np.int64)])
    return Graph(features=comb_x.numpy(), edges=edges, node_labels=labels,
                 edge_labels=None if graph.edge_labels is None else dict(graph.edge_labels),
                 graph_label=graph.graph_label, node_ids=ids)


class TaskHead(nn.Module):
    """Affine layer on the graph embedding; the prediction function."""

    def __init__(self, weight: np.ndarray, bias: np.ndarray, kind: str = "classify",
                 label_mode: str = "multiclass_softmax"):
        super().__init__()
        if kind not in HEAD_KINDS:
            raise ValidationError(f"unknown head kind {kind!r}")
        if label_mode not in LABEL_MODES:
            raise ValidationError(f"unknown label_mode {label_mode!r}")
        weight = np.asarray(weight, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64)
        if weight.ndim != 2 or bias.shape != (weight.shape[0],):
            raise ValidationError("head weight must be (out, d_h) with matching bias")
        if kind == "link_score" and weight.shape[0] != 1:
            raise ValidationError("link_score heads are single-output")
        self.kind = kind
        self.label_mode = label_mode
        self.weight = nn.Parameter(torch.from_numpy(weight.copy()))
        self.bias = nn.Parameter(torch.from_numpy(bias.copy()))

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.weight.shape[1]

    def logits(self, z: torch.Tensor) -> torch.Tensor:
        return z @ self.weight.T + self.bias

    def predict(self, z: torch.Tensor) -> torch.Tensor:
        out = self.logits(z)
        if self.kind == "regress":
            return out
        if self.kind == "link_score":
            return torch.sigmoid(out)
        if self.label_mode == "multilabel_sigmoid":
            return torch.sigmoid(out)
        return torch.softmax(out, dim=-1)

    def loss(self, logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        if self.kind == "regress":
            return F.mse_loss(logits, labels)
        if self.kind == "link_score":
            return F.binary_cross_entropy_with_logits(logits.squeeze(-1), labels)
        if self.label_mode == "multilabel_sigmoid":
            return F.binary_cross_entropy_with_logits(logits, labels)
        return F.cross_entropy(logits, labels)

    def copy(self) -> "TaskHead":
        return TaskHead(self.weight.detach().numpy().copy(),
                        self.bias.detach().numpy().copy(), self.kind, self.label_mode)

    def config(self) -> dict:
        return {"kind": self.kind, "label_mode": self.label_mode,
                "out_dim": self.out_dim, "hidden_dim": self.hidden_dim}


def init_head(hidden_dim: int, out_dim: int, kind: str = "classify",
              label_mode: str = "multiclass_softmax", rng=None) -> TaskHead:
    if hidden_dim < 1 or out_dim < 1:
        raise ValidationError("head dimensions must be >= 1")
    rng = as_rng(rng)
    bound = 1.0 / np.sqrt(hidden_dim)
    weight = rng.uniform(-bound, bound, size=(out_dim, hidden_dim))
    return TaskHead(weight, np.zeros(out_dim), kind, label_mode)


def labels_to_tensor(head: TaskHead, labels) -> torch.Tensor:
    """Stack episode labels into the tensor shape the head's loss expects."""
    if head.kind == "classify" and head.label_mode == "multiclass_softmax":
        return torch.tensor([int(l) for l in labels], dtype=torch.int64)
    rows = [np.atleast_1d(np.asarray(l, dtype=np.float64)) for l in labels]
    arr = np.stack(rows)
    if head.kind == "link_score":
        return torch.from_numpy(arr.reshape(len(rows)))
    return torch.from_numpy(arr)


def _embed_prompted(prompt: PromptGraph, model: GCNBackbone,
                    prep: PreparedBatch) -> torch.Tensor:
    """Graph embeddings (B, d_h) for feature-add modes on a padded batch."""
    x = insert_features(prompt, prep.x, mask=prep.mask)
    return prep.embed(model, x=x)


def _embed_prompted_subgraph(prompt: PromptGraph, model: GCNBackbone,
                             tensors) -> torch.Tensor:
    """Graph embeddings (B, d_h) in subgraph mode; one graph at a time."""
    outs = []
    for x, adj in tensors:
        comb_x, comb_adj = combined_tensors(prompt, x, adj)
        h = model.encode(comb_x, comb_adj)
        outs.append(model.readout_nodes(h))
    return torch.stack(outs)


class PromptedSet:
    """Reusable tensor cache for repeatedly embedding a fixed graph list."""

    def __init__(self, graphs, subgraph_mode: bool):
        self.subgraph_mode = subgraph_mode
        if subgraph_mode:
            self.tensors = [graph_tensors(g) for g in graphs]
        else:
            self.prep = PreparedBatch(graphs)

    def embed(self, prompt: PromptGraph, model: GCNBackbone) -> torch.Tensor:
        if self.subgraph_mode:
            return _embed_prompted_subgraph(prompt, model, self.tensors)
        return _embed_prompted(prompt, model, self.prep)


def prompted_set(prompt: PromptGraph, graphs) -> PromptedSet:
    for g in graphs:
        _check_host(prompt, g)
    return PromptedSet(graphs, prompt.insert_mode == "subgraph")


def _require_frozen(model: GCNBackbone) -> None:
    if not model.frozen:
        raise ContractError("prompting requires a frozen backbone")


def prompted_forward(prompt: PromptGraph, graph: Graph, frozen_model: GCNBackbone,
                     head: Optional[TaskHead] = None) -> np.ndarray:
    """Prediction vector for one graph through the frozen backbone.

    With no head, returns the graph embedding of the manipulated graph.
    """
    _require_frozen(frozen_model)
    _check_host(prompt, graph)
    with torch.no_grad():
        z = PromptedSet([graph], prompt.insert_mode == "subgraph").embed(
            prompt, frozen_model)
        if head is None:
            return z[0].numpy()
        return head.predict(z)[0].numpy()


@dataclass
class TuneConfig:
    steps: int = 200
    learning_rate: float = 0.01
    seed: int = 0

    def validate(self) -> None:
        if self.steps < 0:
            raise ValidationError("steps must be >= 0")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")


def _snapshot(module: nn.Module):
    return [p.detach().clone() for p in module.parameters()]


def _restore(module: nn.Module, snap) -> None:
    with torch.no_grad():
        for p, s in zip(module.parameters(), snap):
            p.copy_(s)


def tune_prompt(prompt: PromptGraph, head: TaskHead, episodes, frozen_model: GCNBackbone,
                config: TuneConfig):
    """Adam on (prompt, head) against the pooled support loss.

    The backbone stays untouched; the returned pair carries the best-loss
    iterate seen during the run (including the initial point), and the full
    loss trace comes back alongside.
    """
    config.validate()
    _require_frozen(frozen_model)
    if not episodes:
        raise ValidationError("tune_prompt needs at least one episode")
    if config.steps == 0:
        return prompt, head, []

    sets, labels = [], []
    for ep in episodes:
        graphs = [g for g, _ in ep.support]
        if not graphs:
            raise ValidationError("episode has an empty support set")
        sets.append(prompted_set(prompt, graphs))
        labels.append(labels_to_tensor(head, [y for _, y in ep.support]))

    params = list(prompt.parameters()) + list(head.parameters())
    opt = torch.optim.Adam(params, lr=config.learning_rate)
    before = frozen_model.fingerprint()

    def support_loss() -> torch.Tensor:
        total = torch.zeros((), dtype=DTYPE)
        count = 0
        for s, y in zip(sets, labels):
            logits = head.logits(s.embed(prompt, frozen_model))
            total = total + head.loss(logits, y) * len(y)
            count += len(y)
        return total / count

    trace = []
    best = (float("inf"), None, None)
    for step in range(config.steps):
        loss = support_loss()
        value = float(loss.detach())
        if not np.isfinite(value):
            raise NumericError(f"non-finite tuning loss at step {step}")
        trace.append(value)
        if value < best[0]:
            best = (value, _snapshot(prompt), _snapshot(head))
        opt.zero_grad()
        loss.backward()
        opt.step()
    with torch.no_grad():
        final = float(support_loss())
    if not np.isfinite(final):
        raise NumericError(f"non-finite tuning loss at step {config.steps}")
    trace.append(final)
    if final < best[0]:
        best = (final, _snapshot(prompt), _snapshot(head))
    _restore(prompt, best[1])
    _restore(head, best[2])
    if frozen_model.fingerprint() != before:
        raise ContractError("backbone changed during prompt tuning")
    return prompt, head, trace


def checkpoint_save(prompt: PromptGraph, path, head: Optional[TaskHead] = None) -> None:
    config = {"kind": "prompt", "prompt": prompt.config()}
    arrays = {"tokens": prompt.tokens.detach().numpy()}
    if prompt.structure_params is not None:
        arrays["structure_params"] = prompt.structure_params.detach().numpy()
    if head is not None:
        config["head"] = head.config()
        arrays["head_weight"] = head.weight.detach().numpy()
        arrays["head_bias"] = head.bias.detach().numpy()
    write_checkpoint(path, config, arrays)


def checkpoint_load(path):
    """Returns (PromptGraph, TaskHead or None)."""
    config, arrays = read_checkpoint(path)
    if config.get("kind") != "prompt":
        raise ValidationError(f"checkpoint at {path} is not a prompt checkpoint")
    pc = config["prompt"]
    prompt = PromptGraph(arrays["tokens"], pc["structure_mode"], pc["insert_mode"],
                         pc["delta"], arrays.get("structure_params"))
    head = None
    if "head" in config:
        hc = config["head"]
        head = TaskHead(arrays["head_weight"], arrays["head_bias"],
                        hc["kind"], hc["label_mode"])
    return prompt, head
