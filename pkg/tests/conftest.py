"""Shared fixtures and oracle helpers for the test suite."""

import numpy as np
import pytest
import torch

from graphprompt.data import Graph


@pytest.fixture(scope="session", autouse=True)
def single_thread():
    # determinism checks assume single-threaded reductions
    torch.set_num_threads(1)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def random_graph(rng, min_nodes=3, max_nodes=12, feature_dim=4, edge_p=0.3,
                 with_node_labels=False, num_classes=2) -> Graph:
    """Erdos-Renyi graph with gaussian features, for property tests."""
    n = int(rng.integers(min_nodes, max_nodes + 1))
    feats = rng.normal(size=(n, feature_dim))
    edges = [(u, v) for u in range(n) for v in range(u + 1, n)
             if rng.random() < edge_p]
    labels = rng.integers(0, num_classes, size=n) if with_node_labels else None
    return Graph(features=feats, edges=edges, node_labels=labels)


def finite_diff_grad(f, tensor: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    """Central-difference gradient of scalar f() with respect to `tensor`.

    Mutates tensor entries in place under no_grad and restores them, so f may
    close over the live parameter.
    """
    grad = torch.zeros_like(tensor)
    flat = tensor.data.view(-1)
    gflat = grad.view(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + eps
        hi = float(f())
        flat[i] = orig - eps
        lo = float(f())
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def relative_error(got: torch.Tensor, want: torch.Tensor) -> float:
    denom = max(float(want.norm()), 1e-12)
    return float((got - want).norm()) / denom


def bfs_distances(graph: Graph, sources) -> dict:
    """Independent BFS oracle: hop distance from the nearest source."""
    from collections import deque

    adj = {i: set() for i in range(graph.node_count)}
    for u, v in graph.edges:
        adj[u].add(v)
        adj[v].add(u)
    dist = {int(s): 0 for s in sources}
    queue = deque(int(s) for s in sources)
    while queue:
        cur = queue.popleft()
        for nb in adj[cur]:
            if nb not in dist:
                dist[nb] = dist[cur] + 1
                queue.append(nb)
    return dist
