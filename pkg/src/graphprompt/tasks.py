"""Task reformulation: node/edge problems as graph-level episodes.

Node- and edge-level targets become induced graphs carrying the target's
label as a graph label, so one graph-level pipeline serves every task.
Few-shot episodes sample class-balanced support/query sets, and link
prediction splits a graph's edges into message/train/test partitions with
non-adjacent negative pairs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .data import Dataset, Graph, canonical_edge, induced_graph
from .errors import ValidationError
from .seeding import as_rng

LEVELS = ("node", "edge", "graph", "link", "regression")


@dataclass
class TaskEpisode:
    level: str
    support: list  # (Graph, label) pairs
    query: list
    class_count: Optional[int] = None
    target_arity: Optional[int] = None
    provenance: dict = field(default_factory=dict)
    support_indices: list = field(default_factory=list)
    query_indices: list = field(default_factory=list)

    def validate(self) -> None:
        if self.level not in LEVELS:
            raise ValidationError(f"unknown episode level {self.level!r}")
        if self.class_count is None and self.target_arity is None:
            raise ValidationError("episode needs class_count or target_arity")
        if set(self.support_indices) & set(self.query_indices):
            raise ValidationError("support and query sets share instances")


def reformulate_task(dataset: Dataset, level: str, hops: int = 2,
                     max_nodes: int = 100) -> Dataset:
    """One induced graph per labeled target; target label becomes graph label."""
    if level not in ("node", "edge"):
        raise ValidationError(f"reformulate_task handles node/edge levels, not {level!r}")
    graphs = []
    for g in dataset.graphs:
        if level == "node":
            if g.node_labels is None:
                continue
            for node in range(g.node_count):
                label = int(g.node_labels[node])
                if label < 0:
                    continue
                sub = induced_graph(g, node, hops=hops, max_nodes=max_nodes)
                sub.graph_label = label
                graphs.append(sub)
        else:
            if not g.edge_labels:
                continue
            for (u, v), label in sorted(g.edge_labels.items()):
                sub = induced_graph(g, (u, v), hops=hops, max_nodes=max_nodes)
                sub.graph_label = int(label)
                graphs.append(sub)
    if not graphs:
        raise ValidationError(f"dataset {dataset.name!r} has no {level}-level labels")
    return Dataset(graphs=graphs, num_classes=dataset.num_classes,
                   feature_dim=dataset.feature_dim, task_kind="graph",
                   name=f"{dataset.name}:{level}")


def _episode_label(graph: Graph):
    if graph.graph_label is None:
        raise ValidationError("few-shot sampling needs graph labels on every instance")
    return graph.graph_label


def sample_few_shot(task_dataset: Dataset, shots_per_class: int,
                    query_per_class: int, rng=None, seed=None) -> TaskEpisode:
    """Class-balanced episode sampled without replacement."""
    if shots_per_class < 1 or query_per_class < 0:
        raise ValidationError("need shots_per_class >= 1 and query_per_class >= 0")
    rng = as_rng(rng)
    by_class = {}
    for idx, g in enumerate(task_dataset.graphs):
        by_class.setdefault(int(_episode_label(g)), []).append(idx)
    need = shots_per_class + query_per_class
    support_idx, query_idx = [], []
    for cls in range(task_dataset.num_classes):
        pool = by_class.get(cls, [])
        if len(pool) < need:
            raise ValidationError(
                f"class {cls} has {len(pool)} instances, needs {need}")
        picked = rng.permutation(len(pool))[:need]
        chosen = [pool[i] for i in picked]
        support_idx.extend(chosen[:shots_per_class])
        query_idx.extend(chosen[shots_per_class:])
    episode = TaskEpisode(
        level=task_dataset.task_kind,
        support=[(task_dataset.graphs[i], int(_episode_label(task_dataset.graphs[i])))
                 for i in support_idx],
        query=[(task_dataset.graphs[i], int(_episode_label(task_dataset.graphs[i])))
               for i in query_idx],
        class_count=task_dataset.num_classes,
        provenance={"dataset": task_dataset.name, "seed": seed},
        support_indices=support_idx,
        query_indices=query_idx,
    )
    episode.validate()
    return episode


def sample_regression_episode(task_dataset: Dataset, support_size: int,
                              query_size: int, rng=None, seed=None) -> TaskEpisode:
    """Uniform episode over graphs with vector-valued targets."""
    rng = as_rng(rng)
    total = support_size + query_size
    if len(task_dataset.graphs) < total:
        raise ValidationError(
            f"dataset has {len(task_dataset.graphs)} instances, needs {total}")
    order = rng.permutation(len(task_dataset.graphs))[:total]
    support_idx = [int(i) for i in order[:support_size]]
    query_idx = [int(i) for i in order[support_size:]]
    first = np.atleast_1d(np.asarray(_episode_label(task_dataset.graphs[support_idx[0]])))
    episode = TaskEpisode(
        level="regression",
        support=[(task_dataset.graphs[i], _episode_label(task_dataset.graphs[i]))
                 for i in support_idx],
        query=[(task_dataset.graphs[i], _episode_label(task_dataset.graphs[i]))
               for i in query_idx],
        target_arity=int(first.shape[0]),
        provenance={"dataset": task_dataset.name, "seed": seed},
        support_indices=support_idx,
        query_indices=query_idx,
    )
    episode.validate()
    return episode


def episode_manifest(episode: TaskEpisode) -> str:
    """JSON manifest (instance indices + provenance) for exact re-materialization."""
    return json.dumps({
        "level": episode.level,
        "class_count": episode.class_count,
        "target_arity": episode.target_arity,
        "provenance": episode.provenance,
        "support_indices": list(map(int, episode.support_indices)),
        "query_indices": list(map(int, episode.query_indices)),
    }, sort_keys=True)


def episode_from_manifest(manifest: str, task_dataset: Dataset) -> TaskEpisode:
    spec = json.loads(manifest)
    graphs = task_dataset.graphs
    for idx in spec["support_indices"] + spec["query_indices"]:
        if not 0 <= idx < len(graphs):
            raise ValidationError(f"manifest index {idx} out of range")
    episode = TaskEpisode(
        level=spec["level"],
        support=[(graphs[i], _episode_label(graphs[i])) for i in spec["support_indices"]],
        query=[(graphs[i], _episode_label(graphs[i])) for i in spec["query_indices"]],
        class_count=spec.get("class_count"),
        target_arity=spec.get("target_arity"),
        provenance=spec.get("provenance", {}),
        support_indices=list(spec["support_indices"]),
        query_indices=list(spec["query_indices"]),
    )
    episode.validate()
    return episode


class LinkPair(NamedTuple):
    u: int
    v: int
    label: int
    group: int  # ties negatives to their positive for ranking


def _sample_negatives(n: int, forbidden: set, count: int, rng,
                      max_tries_factor: int = 200) -> list:
    """Uniform non-adjacent pairs, distinct within the returned list."""
    out, seen = [], set()
    tries = 0
    limit = max_tries_factor * max(count, 1)
    while len(out) < count:
        if tries >= limit:
            raise ValidationError(
                f"could not sample {count} non-adjacent pairs from a {n}-node graph")
        tries += 1
        u = int(rng.integers(n))
        v = int(rng.integers(n))
        if u == v:
            continue
        pair = canonical_edge(u, v)
        if pair in forbidden or pair in seen:
            continue
        seen.add(pair)
        out.append(pair)
    return out


def link_prediction_split(graph: Graph, msg_ratio: float = 0.8,
                          train_ratio: float = 0.1,
                          negatives_per_positive_train: int = 1,
                          negatives_per_positive_test: int = 100,
                          rng=None):
    """Partition edges into message/train/test and attach negative pairs.

    Returns `(message_graph, train_pairs, test_pairs)`. The message graph
    keeps only message edges (nodes untouched); train and test positives
    are the held-out edges, each with uniformly sampled pairs absent from
    the full edge set. Pairs carry a group id linking negatives to their
    positive.
    """
    if msg_ratio <= 0 or train_ratio <= 0 or msg_ratio + train_ratio >= 1:
        raise ValidationError("need msg_ratio, train_ratio > 0 with sum < 1")
    if negatives_per_positive_train < 0 or negatives_per_positive_test < 0:
        raise ValidationError("negative counts must be >= 0")
    rng = as_rng(rng)
    m = graph.edge_count
    n_msg = int(round(m * msg_ratio))
    n_train = int(round(m * train_ratio))
    n_test = m - n_msg - n_train
    if n_msg < 1 or n_train < 1 or n_test < 1:
        raise ValidationError(
            f"graph with {m} edges cannot fill an "
            f"{msg_ratio:.0%}/{train_ratio:.0%} message/train split")
    order = rng.permutation(m)
    edges = [graph.edges[i] for i in order]
    msg_edges = sorted(edges[:n_msg])
    train_pos = edges[n_msg:n_msg + n_train]
    test_pos = edges[n_msg + n_train:]

    message_graph = Graph(
        features=graph.features.copy(), edges=msg_edges,
        node_labels=None if graph.node_labels is None else graph.node_labels.copy(),
        edge_labels=None, graph_label=graph.graph_label,
        node_ids=None if graph.node_ids is None else graph.node_ids.copy())

    forbidden = graph.edge_set()
    n = graph.node_count

    def attach(positives, negatives_each):
        pairs = []
        for gid, (u, v) in enumerate(positives):
            pairs.append(LinkPair(u, v, 1, gid))
            for nu, nv in _sample_negatives(n, forbidden, negatives_each, rng):
                pairs.append(LinkPair(nu, nv, 0, gid))
        return pairs

    train_pairs = attach(train_pos, negatives_per_positive_train)
    test_pairs = attach(test_pos, negatives_per_positive_test)
    return message_graph, train_pairs, test_pairs


def link_pair_graph(message_graph: Graph, pair, hops: int = 2,
                    max_nodes: int = 100) -> Graph:
    """Induced graph around a candidate pair, built on message edges only."""
    return induced_graph(message_graph, (pair[0], pair[1]), hops=hops,
                         max_nodes=max_nodes, require_edge=False)


def link_episode(message_graph: Graph, train_pairs, hops: int = 2,
                 max_nodes: int = 100, dataset_name: str = "",
                 seed=None) -> TaskEpisode:
    """Support episode of pair-induced graphs labeled by link existence."""
    if not train_pairs:
        raise ValidationError("link episode needs at least one pair")
    support = [(link_pair_graph(message_graph, p, hops, max_nodes), int(p.label))
               for p in train_pairs]
    return TaskEpisode(level="link", support=support, query=[], class_count=2,
                       provenance={"dataset": dataset_name, "seed": seed},
                       support_indices=list(range(len(train_pairs))))
