"""Task reformulation, few-shot episodes, manifests, link splits."""

import json

import numpy as np
import pytest

from graphprompt.data import Dataset, Graph, synthesize_dataset, SynthSpec, \
    synthesize_node_graph, synthesize_regression_dataset
from graphprompt.errors import ValidationError
from graphprompt.tasks import (
    LinkPair,
    TaskEpisode,
    episode_from_manifest,
    episode_manifest,
    link_episode,
    link_pair_graph,
    link_prediction_split,
    reformulate_task,
    sample_few_shot,
    sample_regression_episode,
)

from conftest import bfs_distances, make_rng, random_graph


# ---------------------------------------------------------------------------
# Reformulation to graph-level instances
# ---------------------------------------------------------------------------

def test_reformulate_node_level_covers_labeled_nodes():
    ds = synthesize_node_graph(2, 12, 4, p_intra=0.25, p_inter=0.08,
                               rng=make_rng(0))
    g = ds.graphs[0]
    g.node_labels[5] = -1  # unlabeled nodes are skipped
    task = reformulate_task(ds, "node", hops=2, max_nodes=50)
    assert task.task_kind == "graph"
    assert len(task.graphs) == g.node_count - 1
    labeled = [i for i in range(g.node_count) if g.node_labels[i] >= 0]
    for sub, node in zip(task.graphs, labeled):
        assert int(sub.node_ids[0]) == node
        assert sub.graph_label == int(g.node_labels[node])
        assert sub.node_count <= 50


def test_reformulate_edge_level_covers_labeled_edges():
    ds = synthesize_node_graph(2, 10, 4, p_intra=0.4, p_inter=0.15,
                               rng=make_rng(1), label_edges=True)
    g = ds.graphs[0]
    task = reformulate_task(ds, "edge", hops=1, max_nodes=30)
    assert len(task.graphs) == len(g.edge_labels)
    for sub, ((u, v), label) in zip(task.graphs, sorted(g.edge_labels.items())):
        assert [int(sub.node_ids[0]), int(sub.node_ids[1])] == [u, v]
        assert sub.graph_label == int(label)


def test_reformulate_rejects_other_levels_and_missing_labels():
    ds = synthesize_dataset(SynthSpec(graphs_per_class=2, min_nodes=5, max_nodes=6),
                            make_rng(2))
    with pytest.raises(ValidationError):
        reformulate_task(ds, "graph")
    with pytest.raises(ValidationError):
        reformulate_task(ds, "node")  # no node labels anywhere


# ---------------------------------------------------------------------------
# Few-shot episode sampling
# ---------------------------------------------------------------------------

def _graph_task(seed, num_classes=3, per_class=8):
    return synthesize_dataset(
        SynthSpec(num_classes=num_classes, graphs_per_class=per_class,
                  min_nodes=5, max_nodes=8), make_rng(seed))


def test_sample_few_shot_counts_and_balance():
    task = _graph_task(3)
    ep = sample_few_shot(task, shots_per_class=3, query_per_class=2, rng=make_rng(4))
    assert len(ep.support) == 9 and len(ep.query) == 6
    support_labels = [y for _, y in ep.support]
    assert all(support_labels.count(c) == 3 for c in range(3))
    query_labels = [y for _, y in ep.query]
    assert all(query_labels.count(c) == 2 for c in range(3))
    assert not set(ep.support_indices) & set(ep.query_indices)
    ep.validate()


def test_sample_few_shot_deterministic_and_insufficient():
    task = _graph_task(5)
    a = sample_few_shot(task, 2, 2, rng=make_rng(7))
    b = sample_few_shot(task, 2, 2, rng=make_rng(7))
    assert a.support_indices == b.support_indices
    assert a.query_indices == b.query_indices
    with pytest.raises(ValidationError):
        sample_few_shot(task, 7, 2, rng=make_rng(8))  # 9 > 8 per class
    with pytest.raises(ValidationError):
        sample_few_shot(task, 0, 2, rng=make_rng(9))


def test_sample_regression_episode():
    ds = synthesize_regression_dataset(num_graphs=10, num_targets=2, rng=make_rng(10))
    ep = sample_regression_episode(ds, 6, 3, rng=make_rng(11))
    assert ep.level == "regression" and ep.target_arity == 2
    assert len(ep.support) == 6 and len(ep.query) == 3
    with pytest.raises(ValidationError):
        sample_regression_episode(ds, 8, 3, rng=make_rng(12))


def test_episode_validate_rejects_overlap_and_bad_level():
    with pytest.raises(ValidationError):
        TaskEpisode(level="node", support=[], query=[], class_count=2,
                    support_indices=[1, 2], query_indices=[2, 3]).validate()
    with pytest.raises(ValidationError):
        TaskEpisode(level="martian", support=[], query=[], class_count=2).validate()
    with pytest.raises(ValidationError):
        TaskEpisode(level="node", support=[], query=[]).validate()


def test_episode_manifest_roundtrip():
    task = _graph_task(13)
    ep = sample_few_shot(task, 2, 2, rng=make_rng(14))
    manifest = episode_manifest(ep)
    json.loads(manifest)  # valid JSON
    back = episode_from_manifest(manifest, task)
    assert back.support_indices == ep.support_indices
    assert back.query_indices == ep.query_indices
    assert [y for _, y in back.support] == [y for _, y in ep.support]
    assert back.class_count == ep.class_count


def test_episode_manifest_rejects_out_of_range():
    task = _graph_task(15)
    ep = sample_few_shot(task, 2, 2, rng=make_rng(16))
    doc = json.loads(episode_manifest(ep))
    doc["support_indices"][0] = 10_000
    with pytest.raises(ValidationError):
        episode_from_manifest(json.dumps(doc), task)


# ---------------------------------------------------------------------------
# Link prediction splits
# ---------------------------------------------------------------------------

def _dense_graph(seed, n=40, p=0.2):
    rng = make_rng(seed)
    feats = rng.normal(size=(n, 4))
    edges = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < p]
    return Graph(features=feats, edges=edges)


def test_link_split_exact_counts_100_edges():
    # find a graph with exactly 100 edges by adjusting density
    rng = make_rng(17)
    n = 30
    edges = set()
    while len(edges) < 100:
        u, v = int(rng.integers(n)), int(rng.integers(n))
        if u != v:
            edges.add((min(u, v), max(u, v)))
    g = Graph(features=rng.normal(size=(n, 3)), edges=sorted(edges))
    msg, train, test = link_prediction_split(g, rng=make_rng(18))
    assert msg.edge_count == 80
    assert sum(1 for p in train if p.label == 1) == 10
    assert sum(1 for p in test if p.label == 1) == 10


def test_link_split_partition_and_negatives():
    g = _dense_graph(19)
    msg, train, test = link_prediction_split(
        g, negatives_per_positive_train=2, negatives_per_positive_test=5,
        rng=make_rng(20))
    full = g.edge_set()
    train_pos = {(p.u, p.v) for p in train if p.label == 1}
    test_pos = {(p.u, p.v) for p in test if p.label == 1}
    msg_set = msg.edge_set()
    # message/train/test positives partition the original edge set
    assert msg_set | train_pos | test_pos == full
    assert not (msg_set & train_pos) and not (msg_set & test_pos)
    assert not (train_pos & test_pos)
    # node set untouched
    assert msg.node_count == g.node_count
    # negatives are absent from the FULL edge set and well-formed
    for p in list(train) + list(test):
        if p.label == 0:
            assert (min(p.u, p.v), max(p.u, p.v)) not in full
            assert p.u != p.v
    # group structure: positive first, correct negative count per group
    for pairs, k_neg in ((train, 2), (test, 5)):
        by_group = {}
        for p in pairs:
            by_group.setdefault(p.group, []).append(p)
        for gid, members in by_group.items():
            assert members[0].label == 1
            assert sum(1 for m in members if m.label == 0) == k_neg


def test_link_split_deterministic():
    g = _dense_graph(21)
    a = link_prediction_split(g, rng=make_rng(22))
    b = link_prediction_split(g, rng=make_rng(22))
    assert a[0].edges == b[0].edges
    assert a[1] == b[1] and a[2] == b[2]


def test_link_split_rejects_tiny_graphs_and_bad_ratios():
    g = Graph(features=np.zeros((4, 2)), edges=[(0, 1), (1, 2)])
    with pytest.raises(ValidationError):
        link_prediction_split(g, rng=make_rng(23))
    big = _dense_graph(24)
    with pytest.raises(ValidationError):
        link_prediction_split(big, msg_ratio=0.8, train_ratio=0.3, rng=make_rng(25))
    with pytest.raises(ValidationError):
        link_prediction_split(big, negatives_per_positive_train=-1, rng=make_rng(26))


def test_link_split_negative_sampling_exhaustion():
    # complete graph: no room for negatives
    n = 6
    edges = [(u, v) for u in range(n) for v in range(u + 1, n)]
    g = Graph(features=np.zeros((n, 2)), edges=edges)
    with pytest.raises(ValidationError):
        link_prediction_split(g, rng=make_rng(27))


def test_link_pair_graph_targets_first_and_admits_non_edges():
    g = _dense_graph(28)
    msg, train, _ = link_prediction_split(g, rng=make_rng(29))
    neg = next(p for p in train if p.label == 0)
    sub = link_pair_graph(msg, neg, hops=2, max_nodes=50)
    assert [int(sub.node_ids[0]), int(sub.node_ids[1])] == [neg.u, neg.v]
    # the induced graph is built on MESSAGE edges only
    dist = bfs_distances(msg, [neg.u, neg.v])
    want = {w for w, d in dist.items() if d <= 2}
    if len(want) <= 50:
        assert set(map(int, sub.node_ids)) == want


def test_link_episode_structure():
    g = _dense_graph(30)
    msg, train, _ = link_prediction_split(g, rng=make_rng(31))
    ep = link_episode(msg, train, hops=1, max_nodes=30, dataset_name="toy", seed=0)
    assert ep.level == "link" and ep.class_count == 2
    assert len(ep.support) == len(train)
    labels = [y for _, y in ep.support]
    assert labels == [p.label for p in train]
    with pytest.raises(ValidationError):
        link_episode(msg, [], hops=1)
