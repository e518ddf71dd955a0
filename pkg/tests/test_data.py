"""Graph type, disk format, induced subgraphs, augmentations, generators."""

import logging
import math

import numpy as np
import pytest

from graphprompt.data import (
    Dataset,
    Graph,
    SynthSpec,
    augment,
    canonical_edges,
    induced_graph,
    load_dataset,
    save_dataset,
    synthesize_dataset,
    synthesize_node_graph,
    synthesize_regression_dataset,
)
from graphprompt.errors import SchemaError, ValidationError

from conftest import bfs_distances, make_rng, random_graph


# ---------------------------------------------------------------------------
# Graph construction
# ---------------------------------------------------------------------------

def test_canonical_edges_dedups_orders_sorts():
    got = canonical_edges([(3, 1), (1, 3), (0, 2), (2, 0), (4, 2)])
    assert got == [(0, 2), (1, 3), (2, 4)]


def test_graph_rejects_self_loop():
    with pytest.raises(ValidationError):
        Graph(features=np.zeros((2, 1)), edges=[(0, 0)])


def test_graph_rejects_out_of_range_edge():
    with pytest.raises(ValidationError):
        Graph(features=np.zeros((2, 1)), edges=[(0, 5)])


def test_graph_rejects_label_length_mismatch():
    with pytest.raises(ValidationError):
        Graph(features=np.zeros((3, 1)), node_labels=[0, 1])


def test_graph_rejects_edge_label_for_missing_edge():
    with pytest.raises(ValidationError):
        Graph(features=np.zeros((3, 1)), edges=[(0, 1)], edge_labels={(1, 2): 0})


def test_graph_canonicalizes_edges_and_edge_labels():
    g = Graph(features=np.zeros((3, 1)), edges=[(2, 0), (0, 2), (1, 0)],
              edge_labels={(2, 0): 1})
    assert g.edges == [(0, 1), (0, 2)]
    assert g.edge_labels == {(0, 2): 1}


def test_graph_copy_is_independent():
    g = random_graph(make_rng(0), with_node_labels=True)
    h = g.copy()
    h.features[0, 0] += 1.0
    h.node_labels[0] = 1 - h.node_labels[0]
    assert not np.array_equal(g.features, h.features)
    assert not np.array_equal(g.node_labels, h.node_labels)
    assert g.edges == h.edges


def test_adjacency_symmetric_zero_diagonal():
    g = random_graph(make_rng(1))
    a = g.adjacency()
    assert np.array_equal(a, a.T)
    assert not np.diagonal(a).any()
    assert a.sum() == 2 * g.edge_count


def test_dataset_rejects_label_outside_range():
    g = Graph(features=np.zeros((2, 1)), node_labels=[0, 3])
    with pytest.raises(ValidationError):
        Dataset(graphs=[g], num_classes=2, feature_dim=1, task_kind="node")


def test_dataset_allows_unlabeled_sentinel():
    g = Graph(features=np.zeros((2, 1)), node_labels=[-1, 1])
    ds = Dataset(graphs=[g], num_classes=2, feature_dim=1, task_kind="node")
    assert ds.graphs[0].node_labels[0] == -1


def test_dataset_rejects_feature_dim_mismatch():
    g = Graph(features=np.zeros((2, 3)))
    with pytest.raises(SchemaError):
        Dataset(graphs=[g], num_classes=2, feature_dim=2, task_kind="graph")


# ---------------------------------------------------------------------------
# Disk format
# ---------------------------------------------------------------------------

def test_save_load_roundtrip_node_dataset(tmp_path):
    rng = make_rng(2)
    ds = synthesize_node_graph(2, 10, 4, rng=rng)
    ds.graphs[0].node_labels[3] = -1  # exercise the "-" sentinel
    save_dataset(ds, tmp_path / "ds")
    back = load_dataset(tmp_path / "ds")
    assert back.structurally_equal(ds) or _equal_up_to_ids(back, ds)


def _equal_up_to_ids(a: Dataset, b: Dataset) -> bool:
    """Saving assigns node_ids; compare everything else."""
    if (a.num_classes, a.feature_dim, a.task_kind, a.name) != (
            b.num_classes, b.feature_dim, b.task_kind, b.name):
        return False
    if len(a.graphs) != len(b.graphs):
        return False
    for ga, gb in zip(a.graphs, b.graphs):
        if ga.edges != gb.edges or not np.allclose(ga.features, gb.features):
            return False
        la = None if ga.node_labels is None else ga.node_labels.tolist()
        lb = None if gb.node_labels is None else gb.node_labels.tolist()
        if la != lb or (ga.edge_labels or {}) != (gb.edge_labels or {}):
            return False
    return True


def test_save_load_roundtrip_graph_dataset_exact_floats(tmp_path):
    ds = synthesize_dataset(SynthSpec(graphs_per_class=2, min_nodes=5, max_nodes=8),
                            make_rng(3))
    save_dataset(ds, tmp_path / "ds")
    back = load_dataset(tmp_path / "ds")
    for ga, gb in zip(ds.graphs, back.graphs):
        # repr-based float formatting must round-trip bit-exactly
        assert np.array_equal(ga.features, gb.features)
        assert ga.edges == gb.edges
        assert ga.graph_label == gb.graph_label


def test_save_load_roundtrip_regression_targets(tmp_path):
    ds = synthesize_regression_dataset(num_graphs=3, rng=make_rng(4))
    save_dataset(ds, tmp_path / "ds")
    back = load_dataset(tmp_path / "ds")
    for ga, gb in zip(ds.graphs, back.graphs):
        assert np.array_equal(np.asarray(ga.graph_label), np.asarray(gb.graph_label))


def test_load_missing_file_raises(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "nope")


def test_load_rejects_missing_meta_key(tmp_path):
    ds = synthesize_node_graph(2, 4, 2, rng=make_rng(5))
    save_dataset(ds, tmp_path / "ds")
    meta = (tmp_path / "ds" / "meta.json")
    doc = meta.read_text().replace('"task_kind"', '"task_kindx"')
    meta.write_text(doc)
    with pytest.raises(SchemaError):
        load_dataset(tmp_path / "ds")


def test_load_rejects_bad_node_row(tmp_path):
    ds = synthesize_node_graph(2, 4, 2, rng=make_rng(6))
    save_dataset(ds, tmp_path / "ds")
    nodes = tmp_path / "ds" / "nodes.tsv"
    nodes.write_text(nodes.read_text() + "9\t0\n")  # 2 fields instead of 3
    with pytest.raises(SchemaError):
        load_dataset(tmp_path / "ds")


def test_load_rejects_duplicate_node_id(tmp_path):
    ds = synthesize_node_graph(2, 4, 2, rng=make_rng(7))
    save_dataset(ds, tmp_path / "ds")
    nodes = tmp_path / "ds" / "nodes.tsv"
    first = nodes.read_text().splitlines()[0]
    nodes.write_text(nodes.read_text() + first + "\n")
    with pytest.raises(SchemaError):
        load_dataset(tmp_path / "ds")


def test_load_symmetrizes_directed_duplicates_and_drops_self_loops(tmp_path, caplog):
    ds = synthesize_node_graph(2, 4, 2, rng=make_rng(8))
    save_dataset(ds, tmp_path / "ds")
    edges = tmp_path / "ds" / "edges.tsv"
    lines = [l for l in edges.read_text().splitlines() if l.strip()]
    u, v = lines[0].split("\t")[:2]
    extra = f"{v}\t{u}" + ("\t" + "\t".join(lines[0].split("\t")[2:]) if len(lines[0].split("\t")) > 2 else "")
    selfloop = f"{u}\t{u}" + ("\t" + "\t".join(lines[0].split("\t")[2:]) if len(lines[0].split("\t")) > 2 else "")
    edges.write_text("\n".join(lines + [extra.rstrip("\t"), selfloop.rstrip("\t")]) + "\n")
    with caplog.at_level(logging.WARNING):
        back = load_dataset(tmp_path / "ds")
    assert back.graphs[0].edges == ds.graphs[0].edges
    assert any("duplicate" in r.message or "self-loop" in r.message for r in caplog.records)


# ---------------------------------------------------------------------------
# Induced subgraphs, with an independent BFS oracle
# ---------------------------------------------------------------------------

def test_induced_graph_matches_bfs_oracle_node_targets():
    rng = make_rng(9)
    for _ in range(30):
        g = random_graph(rng, min_nodes=5, max_nodes=30, edge_p=0.15,
                         with_node_labels=True)
        target = int(rng.integers(g.node_count))
        hops = int(rng.integers(1, 4))
        sub = induced_graph(g, target, hops=hops, max_nodes=10_000)
        dist = bfs_distances(g, [target])
        want = {v for v, d in dist.items() if d <= hops}
        kept = [int(i) for i in sub.node_ids]
        assert set(kept) == want
        assert kept[0] == target
        # edges are exactly the original edges among kept nodes
        orig = {e for e in g.edges if e[0] in want and e[1] in want}
        mapped = {tuple(sorted((kept[u], kept[v]))) for u, v in sub.edges}
        assert mapped == orig
        assert np.array_equal(sub.features, g.features[kept])
        assert np.array_equal(sub.node_labels, g.node_labels[kept])


def test_induced_graph_matches_bfs_oracle_edge_targets():
    rng = make_rng(10)
    for _ in range(20):
        g = random_graph(rng, min_nodes=6, max_nodes=25, edge_p=0.2)
        if not g.edges:
            continue
        u, v = g.edges[int(rng.integers(g.edge_count))]
        sub = induced_graph(g, (u, v), hops=2, max_nodes=10_000)
        dist = bfs_distances(g, [u, v])
        want = {w for w, d in dist.items() if d <= 2}
        kept = [int(i) for i in sub.node_ids]
        assert set(kept) == want
        assert kept[0] == u and kept[1] == v


def test_induced_graph_truncation_is_bfs_prefix():
    rng = make_rng(11)
    g = random_graph(rng, min_nodes=30, max_nodes=30, edge_p=0.3)
    target = 0
    sub = induced_graph(g, target, hops=3, max_nodes=8)
    assert sub.node_count == 8
    kept = [int(i) for i in sub.node_ids]
    assert kept[0] == target
    dist = bfs_distances(g, [target])
    reachable = {v for v, d in dist.items() if d <= 3}
    excluded = reachable - set(kept)
    if excluded:
        assert max(dist[v] for v in kept) <= min(dist[v] for v in excluded)


def test_induced_graph_requires_real_edge_by_default():
    g = Graph(features=np.zeros((4, 1)), edges=[(0, 1), (2, 3)])
    with pytest.raises(ValidationError):
        induced_graph(g, (0, 2), hops=1)
    sub = induced_graph(g, (0, 2), hops=1, require_edge=False)
    assert [int(i) for i in sub.node_ids][:2] == [0, 2]


def test_induced_graph_rejects_bad_targets():
    g = Graph(features=np.zeros((3, 1)), edges=[(0, 1)])
    with pytest.raises(ValidationError):
        induced_graph(g, 7)
    with pytest.raises(ValidationError):
        induced_graph(g, (1, 1), require_edge=False)
    with pytest.raises(ValidationError):
        induced_graph(g, 0, hops=0)


def test_induced_graph_provenance_composes():
    # inducing from an already-induced graph keeps original ids
    rng = make_rng(12)
    g = random_graph(rng, min_nodes=20, max_nodes=20, edge_p=0.3)
    sub = induced_graph(g, 5, hops=2, max_nodes=10_000)
    subsub = induced_graph(sub, 0, hops=1, max_nodes=10_000)
    assert int(subsub.node_ids[0]) == 5
    assert set(map(int, subsub.node_ids)) <= set(map(int, sub.node_ids))


# ---------------------------------------------------------------------------
# Augmentations
# ---------------------------------------------------------------------------

def test_augment_identity_returns_equal_copy():
    g = random_graph(make_rng(13), with_node_labels=True)
    out = augment(g, "identity", 0.2, make_rng(0))
    assert out is not g
    assert out.structurally_equal(g)


def test_augment_drop_nodes_floor_count():
    rng = make_rng(14)
    for _ in range(20):
        g = random_graph(rng, min_nodes=4, max_nodes=20)
        ratio = float(rng.uniform(0, 1))
        out = augment(g, "drop_nodes", ratio, rng)
        assert out.node_count == g.node_count - math.floor(ratio * g.node_count)
        # survivors keep original features, tracked through node_ids
        for j, orig in enumerate(map(int, out.node_ids)):
            assert np.array_equal(out.features[j], g.features[orig])
        survivors = set(map(int, out.node_ids))
        want = {e for e in g.edges if e[0] in survivors and e[1] in survivors}
        ids = [int(i) for i in out.node_ids]
        got = {tuple(sorted((ids[u], ids[v]))) for u, v in out.edges}
        assert got == want


def test_augment_drop_edges_floor_count():
    rng = make_rng(15)
    for _ in range(20):
        g = random_graph(rng, min_nodes=4, max_nodes=20, edge_p=0.4)
        ratio = float(rng.uniform(0, 1))
        out = augment(g, "drop_edges", ratio, rng)
        assert out.edge_count == g.edge_count - math.floor(ratio * g.edge_count)
        assert out.edge_set() <= g.edge_set()
        assert out.node_count == g.node_count


def test_augment_mask_features_row_count():
    rng = make_rng(16)
    for _ in range(20):
        g = random_graph(rng, min_nodes=4, max_nodes=20)
        g.features += 10.0  # keep rows nonzero so zeroed rows are countable
        ratio = float(rng.uniform(0, 1))
        out = augment(g, "mask_features", ratio, rng)
        zeroed = int((~out.features.any(axis=1)).sum())
        assert zeroed == math.floor(ratio * g.node_count)
        assert out.edges == g.edges


def test_augment_mask_features_per_dimension():
    g = random_graph(make_rng(17), min_nodes=10, max_nodes=10, feature_dim=5)
    g.features += 10.0
    out = augment(g, "mask_features", 0.3, make_rng(1), per_dimension=True)
    zero_cells = int((out.features == 0.0).sum())
    assert zero_cells == math.floor(0.3 * g.node_count * g.feature_dim)


def test_augment_deterministic_given_seed():
    g = random_graph(make_rng(18), min_nodes=10, max_nodes=10)
    a = augment(g, "drop_edges", 0.5, make_rng(42))
    b = augment(g, "drop_edges", 0.5, make_rng(42))
    assert a.structurally_equal(b)


def test_augment_rejects_bad_inputs():
    g = random_graph(make_rng(19))
    with pytest.raises(ValidationError):
        augment(g, "explode", 0.2, make_rng(0))
    with pytest.raises(ValidationError):
        augment(g, "drop_edges", 1.5, make_rng(0))


# ---------------------------------------------------------------------------
# Synthetic generators
# ---------------------------------------------------------------------------

def test_synthesize_dataset_shape_and_determinism():
    spec = SynthSpec(num_classes=3, graphs_per_class=4, min_nodes=6, max_nodes=9,
                     feature_dim=5)
    a = synthesize_dataset(spec, make_rng(20))
    b = synthesize_dataset(spec, make_rng(20))
    c = synthesize_dataset(spec, make_rng(21))
    assert len(a.graphs) == 12 and a.num_classes == 3 and a.task_kind == "graph"
    labels = sorted(int(g.graph_label) for g in a.graphs)
    assert labels == sorted([0] * 4 + [1] * 4 + [2] * 4)
    for g in a.graphs:
        assert 6 <= g.node_count <= 9 and g.feature_dim == 5
    assert a.structurally_equal(b)
    assert not a.structurally_equal(c)


def test_synthesize_dataset_density_step_increases_density():
    spec = SynthSpec(num_classes=2, graphs_per_class=20, min_nodes=30, max_nodes=30,
                     density_step=1.0)
    ds = synthesize_dataset(spec, make_rng(22))
    def mean_density(c):
        gs = [g for g in ds.graphs if g.graph_label == c]
        return np.mean([g.edge_count / g.node_count for g in gs])
    assert mean_density(1) > mean_density(0)


def test_synthesize_node_graph_labels_and_edge_mode():
    ds = synthesize_node_graph(3, 7, 4, rng=make_rng(23))
    g = ds.graphs[0]
    assert g.node_count == 21 and ds.task_kind == "node" and ds.num_classes == 3
    assert sorted(np.bincount(g.node_labels).tolist()) == [7, 7, 7]

    ds_e = synthesize_node_graph(2, 20, 4, p_intra=0.3, p_inter=0.1,
                                 rng=make_rng(24), label_edges=True)
    ge = ds_e.graphs[0]
    assert ds_e.task_kind == "edge" and ds_e.num_classes == 2
    for (u, v), l in ge.edge_labels.items():
        assert l == int(ge.node_labels[u] == ge.node_labels[v])

    ds_p = synthesize_node_graph(2, 20, 4, p_intra=0.3, p_inter=0.1,
                                 rng=make_rng(24), label_edges=True,
                                 edge_label_mode="block_pair")
    gp = ds_p.graphs[0]
    assert ds_p.num_classes == 3  # (0,0), (0,1), (1,1)
    pair_index = {(0, 0): 0, (0, 1): 1, (1, 1): 2}
    for (u, v), l in gp.edge_labels.items():
        key = tuple(sorted((gp.node_labels[u], gp.node_labels[v])))
        assert l == pair_index[key]
    with pytest.raises(ValidationError):
        synthesize_node_graph(2, 20, 4, rng=make_rng(24), label_edges=True,
                              edge_label_mode="endpoint")


def test_synthesize_regression_targets_follow_graph_statistics():
    ds = synthesize_regression_dataset(num_graphs=6, num_targets=3, rng=make_rng(25))
    assert ds.task_kind == "regression" and ds.num_classes == 0
    for g in ds.graphs:
        t = np.asarray(g.graph_label, dtype=np.float64)
        assert t.shape == (3,)


def test_synth_spec_validation():
    with pytest.raises(ValidationError):
        SynthSpec(num_classes=1).validate()
    with pytest.raises(ValidationError):
        SynthSpec(min_nodes=9, max_nodes=3).validate()
    with pytest.raises(ValidationError):
        SynthSpec(p_intra=1.5).validate()
