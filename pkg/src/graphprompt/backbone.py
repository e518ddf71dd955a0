"""Freezable GCN encoder: node embeddings plus a mean/sum graph readout."""

from __future__ import annotations

import hashlib

import numpy as np
import torch
from torch import nn

from .data import Graph
from .errors import NumericError, ValidationError
from . import checkpoint
from .seeding import as_rng

ACTIVATIONS = {
    "relu": torch.relu,
    "tanh": torch.tanh,
    "identity": lambda t: t,
}
READOUTS = ("mean", "sum")

DTYPE = torch.float64


def graph_tensors(graph: Graph):
    """Feature matrix and raw (self-loop-free) adjacency as float64 tensors."""
    x = torch.from_numpy(np.ascontiguousarray(graph.features, dtype=np.float64))
    adj = torch.from_numpy(graph.adjacency())
    return x, adj


def normalize_adjacency(adj: torch.Tensor) -> torch.Tensor:
    """Symmetric normalization D^{-1/2}(A+I)D^{-1/2} with transient self-loops.

    Works on (n, n) or batched (B, n, n) adjacencies; padded all-zero rows get
    a self-loop of degree one, which keeps zero feature rows exactly zero.
    """
    n = adj.shape[-1]
    eye = torch.eye(n, dtype=adj.dtype)
    a = adj + eye
    deg = a.sum(dim=-1)
    inv_sqrt = deg.rsqrt()
    return a * inv_sqrt.unsqueeze(-1) * inv_sqrt.unsqueeze(-2)


class GCNBackbone(nn.Module):
    """Stack of bias-free graph-convolution layers H <- act(A_hat H W)."""

    def __init__(self, weights, activation: str = "relu", readout: str = "mean"):
        super().__init__()
        if activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {activation!r}")
        if readout not in READOUTS:
            raise ValidationError(f"unknown readout {readout!r}")
        if not weights:
            raise ValidationError("backbone needs at least one layer")
        params = []
        prev_out = None
        for w in weights:
            t = torch.as_tensor(np.asarray(w, dtype=np.float64))
            if t.ndim != 2:
                raise ValidationError("layer weights must be 2-D matrices")
            if prev_out is not None and t.shape[0] != prev_out:
                raise ValidationError(
                    f"layer input dim {t.shape[0]} does not chain with previous output {prev_out}"
                )
            prev_out = t.shape[1]
            params.append(nn.Parameter(t.clone()))
        self.layers = nn.ParameterList(params)
        self.activation = activation
        self.readout = readout
        self._frozen = False

    @property
    def feature_dim(self) -> int:
        return self.layers[0].shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.layers[-1].shape[1]

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def frozen(self) -> bool:
        return self._frozen

    def freeze(self) -> "GCNBackbone":
        for p in self.layers:
            p.requires_grad_(False)
        self._frozen = True
        return self

    def unfreeze(self) -> "GCNBackbone":
        for p in self.layers:
            p.requires_grad_(True)
        self._frozen = False
        return self

    def fingerprint(self) -> str:
        """Content hash over all weights; constant while the model is frozen."""
        h = hashlib.sha256()
        for p in self.layers:
            h.update(p.detach().numpy().astype("<f8").tobytes())
        return h.hexdigest()

    def config(self) -> dict:
        return {
            "kind": "backbone",
            "feature_dim": int(self.feature_dim),
            "hidden_dim": int(self.hidden_dim),
            "depth": int(self.depth),
            "activation": self.activation,
            "readout": self.readout,
            "frozen": self._frozen,
        }

    def encode(self, x: torch.Tensor, adj: torch.Tensor, weights=None) -> torch.Tensor:
        """Node embeddings for one graph (n, d) or a padded batch (B, n, d).

        `weights` substitutes the layer matrices (perturbed-encoder views)
        without touching the stored parameters.
        """
        act = ACTIVATIONS[self.activation]
        a_hat = normalize_adjacency(adj)
        h = x
        for w in self.layers if weights is None else weights:
            h = act(a_hat @ h @ w)
        return h

    def readout_nodes(self, h: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        """Aggregate node rows; `mask` marks real (non-padding) rows in a batch."""
        if mask is None:
            return h.mean(dim=-2) if self.readout == "mean" else h.sum(dim=-2)
        total = (h * mask.unsqueeze(-1)).sum(dim=-2)
        if self.readout == "sum":
            return total
        return total / mask.sum(dim=-1, keepdim=True)

    def forward(self, graph: Graph):
        """Return (node_embeddings, graph_embedding) tensors for one graph."""
        if graph.feature_dim != self.feature_dim:
            raise ValidationError(
                f"graph feature_dim {graph.feature_dim} != model feature_dim {self.feature_dim}"
            )
        if not np.isfinite(graph.features).all():
            raise NumericError("graph features contain NaN/Inf")
        x, adj = graph_tensors(graph)
        h = self.encode(x, adj)
        return h, self.readout_nodes(h)


def init_backbone(
    feature_dim: int,
    hidden_dim: int = 100,
    depth: int = 2,
    activation: str = "relu",
    readout: str = "mean",
    rng=None,
) -> GCNBackbone:
    """Fan-in-scaled uniform init; deterministic given the rng seed."""
    if feature_dim < 1 or hidden_dim < 1 or depth < 1:
        raise ValidationError("feature_dim, hidden_dim, depth must all be >= 1")
    rng = as_rng(rng)
    weights = []
    d_in = feature_dim
    for _ in range(depth):
        bound = 1.0 / np.sqrt(d_in)
        weights.append(rng.uniform(-bound, bound, size=(d_in, hidden_dim)))
        d_in = hidden_dim
    return GCNBackbone(weights, activation=activation, readout=readout)


def checkpoint_save(model: GCNBackbone, path) -> None:
    arrays = [p.detach().numpy() for p in model.layers]
    checkpoint.write_checkpoint(path, model.config(), arrays)


def checkpoint_load(path) -> GCNBackbone:
    config, arrays = checkpoint.read_checkpoint(path)
    if config.get("kind") != "backbone":
        raise ValidationError(f"{path}: not a backbone checkpoint")
    model = GCNBackbone(arrays, activation=config["activation"], readout=config["readout"])
    if config.get("frozen"):
        model.freeze()
    return model


# ---------------------------------------------------------------------------
# Padded batching: numerically identical to the per-graph loop because the
# encoder has no bias terms and act(0) = 0, so padding rows stay zero.
# ---------------------------------------------------------------------------

class PreparedBatch:
    """Padded feature/adjacency tensors for a fixed list of graphs."""

    def __init__(self, graphs):
        if not graphs:
            raise ValidationError("cannot prepare an empty batch")
        dims = {g.feature_dim for g in graphs}
        if len(dims) != 1:
            raise ValidationError("all graphs in a batch must share feature_dim")
        n_max = max(g.node_count for g in graphs)
        b = len(graphs)
        d = graphs[0].feature_dim
        x = np.zeros((b, n_max, d), dtype=np.float64)
        adj = np.zeros((b, n_max, n_max), dtype=np.float64)
        mask = np.zeros((b, n_max), dtype=np.float64)
        for i, g in enumerate(graphs):
            n = g.node_count
            x[i, :n] = g.features
            adj[i, :n, :n] = g.adjacency()
            mask[i, :n] = 1.0
        self.x = torch.from_numpy(x)
        self.adj = torch.from_numpy(adj)
        self.mask = torch.from_numpy(mask)
        self.size = b

    def embed(self, model: GCNBackbone, x: torch.Tensor | None = None,
              weights=None) -> torch.Tensor:
        """Graph embeddings (B, d_h); `x` overrides features (e.g. prompted)."""
        h = model.encode(self.x if x is None else x, self.adj, weights=weights)
        return model.readout_nodes(h, self.mask)
