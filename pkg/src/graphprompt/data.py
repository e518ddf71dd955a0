"""Graph and dataset types, disk format, induced subgraphs, and augmentations."""

from __future__ import annotations

import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import SchemaError, ValidationError
from .seeding import as_rng

logger = logging.getLogger(__name__)

TASK_KINDS = ("node", "edge", "graph", "link", "regression")
AUGMENT_KINDS = ("drop_nodes", "drop_edges", "mask_features", "identity")

Edge = "tuple[int, int]"


def canonical_edge(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


def canonical_edges(edges) -> list[tuple[int, int]]:
    """Deduplicate, order endpoints min-first, and sort lexicographically."""
    return sorted({canonical_edge(int(u), int(v)) for u, v in edges})


@dataclass
class Graph:
    """An undirected simple graph with node features and optional labels.

    Edges are stored canonically (min-index first, sorted, no duplicates,
    no self-loops); self-loops are only added transiently by the encoder
    normalization.
    """

    features: np.ndarray
    edges: list = field(default_factory=list)
    node_labels: np.ndarray | None = None
    edge_labels: dict | None = None
    graph_label: object = None
    node_ids: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValidationError("features must be a 2-D (N, d) matrix")
        self.edges = canonical_edges(self.edges)
        if self.node_labels is not None:
            self.node_labels = np.asarray(self.node_labels, dtype=np.int64)
        if self.node_ids is not None:
            self.node_ids = np.asarray(self.node_ids, dtype=np.int64)
        if self.edge_labels is not None:
            self.edge_labels = {canonical_edge(*e): int(l) for e, l in self.edge_labels.items()}
        self.validate()

    @property
    def node_count(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def edge_set(self) -> set:
        return set(self.edges)

    def validate(self):
        n = self.node_count
        for u, v in self.edges:
            if u == v:
                raise ValidationError(f"self-loop ({u},{v}) is not allowed")
            if not (0 <= u < n and 0 <= v < n):
                raise ValidationError(f"edge ({u},{v}) endpoint out of range for {n} nodes")
        if self.node_labels is not None and len(self.node_labels) != n:
            raise ValidationError("node_labels length must equal node count")
        if self.node_ids is not None and len(self.node_ids) != n:
            raise ValidationError("node_ids length must equal node count")
        if self.edge_labels is not None:
            known = self.edge_set()
            for e in self.edge_labels:
                if e not in known:
                    raise ValidationError(f"edge label for unknown edge {e}")

    def copy(self) -> "Graph":
        return Graph(
            features=self.features.copy(),
            edges=list(self.edges),
            node_labels=None if self.node_labels is None else self.node_labels.copy(),
            edge_labels=None if self.edge_labels is None else dict(self.edge_labels),
            graph_label=_copy_label(self.graph_label),
            node_ids=None if self.node_ids is None else self.node_ids.copy(),
        )

    def adjacency(self) -> np.ndarray:
        """Dense symmetric 0/1 adjacency without self-loops."""
        a = np.zeros((self.node_count, self.node_count), dtype=np.float64)
        for u, v in self.edges:
            a[u, v] = 1.0
            a[v, u] = 1.0
        return a

    def neighbor_lists(self) -> list:
        nbrs = [[] for _ in range(self.node_count)]
        for u, v in self.edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        return [sorted(ns) for ns in nbrs]

    def structurally_equal(self, other: "Graph") -> bool:
        if self.node_count != other.node_count or self.edges != other.edges:
            return False
        if not np.array_equal(self.features, other.features):
            return False
        if (self.node_labels is None) != (other.node_labels is None):
            return False
        if self.node_labels is not None and not np.array_equal(self.node_labels, other.node_labels):
            return False
        if (self.edge_labels or {}) != (other.edge_labels or {}):
            return False
        if not _labels_equal(self.graph_label, other.graph_label):
            return False
        if (self.node_ids is None) != (other.node_ids is None):
            return False
        if self.node_ids is not None and not np.array_equal(self.node_ids, other.node_ids):
            return False
        return True


def _copy_label(label):
    if isinstance(label, np.ndarray):
        return label.copy()
    return label


def _labels_equal(a, b) -> bool:
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return a is not None and b is not None and np.array_equal(np.asarray(a), np.asarray(b))
    return a == b


@dataclass
class Dataset:
    """An ordered collection of graphs sharing one feature space."""

    graphs: list
    num_classes: int
    feature_dim: int
    task_kind: str
    name: str = "dataset"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.task_kind not in TASK_KINDS:
            raise ValidationError(f"unknown task_kind {self.task_kind!r}")
        for i, g in enumerate(self.graphs):
            if g.feature_dim != self.feature_dim:
                raise SchemaError(
                    f"graph {i} has feature_dim {g.feature_dim}, dataset declares {self.feature_dim}"
                )
        if self.task_kind in ("node", "edge", "graph"):
            for i, g in enumerate(self.graphs):
                if g.node_labels is not None:
                    # -1 marks an unlabeled node ("-" in nodes.tsv)
                    bad = g.node_labels[
                        ((g.node_labels < 0) & (g.node_labels != -1))
                        | (g.node_labels >= self.num_classes)
                    ]
                    if bad.size:
                        raise ValidationError(
                            f"graph {i} node label {int(bad[0])} outside [0, {self.num_classes})"
                        )
                for e, l in (g.edge_labels or {}).items():
                    if not 0 <= l < self.num_classes:
                        raise ValidationError(
                            f"graph {i} edge {e} label {l} outside [0, {self.num_classes})"
                        )
                gl = g.graph_label
                if isinstance(gl, (int, np.integer)) and not 0 <= gl < self.num_classes:
                    raise ValidationError(
                        f"graph {i} label {gl} outside [0, {self.num_classes})"
                    )

    def structurally_equal(self, other: "Dataset") -> bool:
        return (
            self.num_classes == other.num_classes
            and self.feature_dim == other.feature_dim
            and self.task_kind == other.task_kind
            and self.name == other.name
            and len(self.graphs) == len(other.graphs)
            and all(a.structurally_equal(b) for a, b in zip(self.graphs, other.graphs))
        )


# ---------------------------------------------------------------------------
# Disk format: meta.json + nodes.tsv + edges.tsv [+ graphs.tsv]
# ---------------------------------------------------------------------------

def load_dataset(path) -> Dataset:
    """Load a dataset directory.

    `nodes.tsv` row order defines node indices; edges reference node ids.
    Directed duplicates are symmetrized and self-loops dropped, each with a
    logged warning.
    """
    root = Path(path)
    meta_path = root / "meta.json"
    nodes_path = root / "nodes.tsv"
    edges_path = root / "edges.tsv"
    for p in (meta_path, nodes_path, edges_path):
        if not p.exists():
            raise FileNotFoundError(f"missing dataset file: {p}")

    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    for key in ("name", "feature_dim", "num_classes", "task_kind"):
        if key not in meta:
            raise SchemaError(f"meta.json missing key {key!r}")
    d = int(meta["feature_dim"])
    if meta["task_kind"] not in TASK_KINDS:
        raise SchemaError(f"meta.json task_kind {meta['task_kind']!r} not one of {TASK_KINDS}")

    node_ids: list[int] = []
    labels: list = []
    feats: list = []
    seen = set()
    for lineno, raw in enumerate(nodes_path.read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 3:
            raise SchemaError(f"nodes.tsv line {lineno}: expected 3 tab-separated fields")
        nid = int(parts[0])
        if nid in seen:
            raise SchemaError(f"nodes.tsv line {lineno}: duplicate node id {nid}")
        seen.add(nid)
        row = [float(tok) for tok in parts[2].split(",")] if parts[2] else []
        if len(row) != d:
            raise SchemaError(
                f"nodes.tsv line {lineno}: {len(row)} features, meta declares {d}"
            )
        node_ids.append(nid)
        labels.append(None if parts[1] == "-" else int(parts[1]))
        feats.append(row)
    if not node_ids:
        raise SchemaError("nodes.tsv contains no nodes")

    index_of = {nid: i for i, nid in enumerate(node_ids)}
    edges: list[tuple[int, int]] = []
    edge_labels: dict = {}
    seen_edges = set()
    warned_directed = False
    for lineno, raw in enumerate(edges_path.read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) not in (2, 3):
            raise SchemaError(f"edges.tsv line {lineno}: expected 2 or 3 fields")
        for tok in parts[:2]:
            if int(tok) not in index_of:
                raise ValidationError(
                    f"edges.tsv line {lineno}: unknown node id {int(tok)}"
                )
        u, v = index_of[int(parts[0])], index_of[int(parts[1])]
        if u == v:
            logger.warning("edges.tsv line %d: dropping self-loop on node %s", lineno, parts[0])
            continue
        e = canonical_edge(u, v)
        if e in seen_edges:
            if not warned_directed:
                logger.warning(
                    "edges.tsv line %d: duplicate/directed edge symmetrized", lineno
                )
                warned_directed = True
        else:
            seen_edges.add(e)
            edges.append(e)
        if len(parts) == 3:
            edge_labels[e] = int(parts[2])

    graphs_path = root / "graphs.tsv"
    graph_labels = {str(k): v for k, v in meta.get("graph_labels", {}).items()}
    if graphs_path.exists():
        graph_of: dict[int, int] = {}
        for lineno, raw in enumerate(graphs_path.read_text(encoding="utf-8").splitlines(), start=1):
            if not raw.strip():
                continue
            parts = raw.split("\t")
            if len(parts) != 2:
                raise SchemaError(f"graphs.tsv line {lineno}: expected 2 fields")
            graph_of[index_of[int(parts[0])]] = int(parts[1])
        missing = [node_ids[i] for i in range(len(node_ids)) if i not in graph_of]
        if missing:
            raise SchemaError(f"graphs.tsv missing assignment for node id {missing[0]}")
        graph_order = sorted(set(graph_of.values()))
    else:
        graph_of = {i: 0 for i in range(len(node_ids))}
        graph_order = [0]

    features = np.asarray(feats, dtype=np.float64)
    graphs = []
    for gid in graph_order:
        members = [i for i in range(len(node_ids)) if graph_of[i] == gid]
        local = {node: j for j, node in enumerate(members)}
        g_edges = []
        g_edge_labels = {}
        for u, v in edges:
            if (u in local) != (v in local):
                raise ValidationError(
                    f"edge ({node_ids[u]},{node_ids[v]}) crosses graph boundaries"
                )
            if u in local:
                e = canonical_edge(local[u], local[v])
                g_edges.append(e)
                if (u, v) in edge_labels or (v, u) in edge_labels:
                    g_edge_labels[e] = edge_labels.get((u, v), edge_labels.get((v, u)))
        member_labels = [labels[i] for i in members]
        has_labels = any(l is not None for l in member_labels)
        gl = graph_labels.get(str(gid))
        graphs.append(
            Graph(
                features=features[members],
                edges=g_edges,
                node_labels=np.asarray(
                    [-1 if l is None else l for l in member_labels], dtype=np.int64
                ) if has_labels else None,
                edge_labels=g_edge_labels or None,
                graph_label=_parse_graph_label(gl),
                node_ids=np.asarray([node_ids[i] for i in members], dtype=np.int64),
            )
        )

    return Dataset(
        graphs=graphs,
        num_classes=int(meta["num_classes"]),
        feature_dim=d,
        task_kind=meta["task_kind"],
        name=str(meta["name"]),
    )


def _parse_graph_label(value):
    if value is None:
        return None
    if isinstance(value, list):
        return np.asarray(value, dtype=np.float64)
    if isinstance(value, float):
        return value
    return int(value)


def save_dataset(dataset: Dataset, path) -> None:
    """Write a dataset in the directory format read by :func:`load_dataset`."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)

    ids = _global_node_ids(dataset)
    node_lines = []
    edge_lines = []
    graph_lines = []
    graph_labels = {}
    for gid, g in enumerate(dataset.graphs):
        for j in range(g.node_count):
            label = "-"
            if g.node_labels is not None and g.node_labels[j] >= 0:
                label = str(int(g.node_labels[j]))
            row = ",".join(_fmt_float(x) for x in g.features[j])
            node_lines.append(f"{ids[gid][j]}\t{label}\t{row}")
            graph_lines.append(f"{ids[gid][j]}\t{gid}")
        for u, v in g.edges:
            line = f"{ids[gid][u]}\t{ids[gid][v]}"
            if g.edge_labels and (u, v) in g.edge_labels:
                line += f"\t{g.edge_labels[(u, v)]}"
            edge_lines.append(line)
        if g.graph_label is not None:
            gl = g.graph_label
            graph_labels[str(gid)] = gl.tolist() if isinstance(gl, np.ndarray) else gl

    meta = {
        "name": dataset.name,
        "feature_dim": dataset.feature_dim,
        "num_classes": dataset.num_classes,
        "task_kind": dataset.task_kind,
    }
    if graph_labels:
        meta["graph_labels"] = graph_labels
    (root / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")
    (root / "nodes.tsv").write_text("\n".join(node_lines) + "\n", encoding="utf-8")
    (root / "edges.tsv").write_text("\n".join(edge_lines) + ("\n" if edge_lines else ""), encoding="utf-8")
    if len(dataset.graphs) > 1:
        (root / "graphs.tsv").write_text("\n".join(graph_lines) + "\n", encoding="utf-8")


def _fmt_float(x: float) -> str:
    # shortest repr round-trips exactly through float()
    return repr(float(x))


def _global_node_ids(dataset: Dataset) -> list:
    ids = [g.node_ids for g in dataset.graphs]
    if all(i is not None for i in ids):
        flat = np.concatenate(ids) if ids else np.array([])
        if len(np.unique(flat)) == len(flat):
            return [list(map(int, i)) for i in ids]
    out, nxt = [], 0
    for g in dataset.graphs:
        out.append(list(range(nxt, nxt + g.node_count)))
        nxt += g.node_count
    return out


# ---------------------------------------------------------------------------
# Induced subgraphs
# ---------------------------------------------------------------------------

def induced_graph(graph: Graph, target, hops: int = 2, max_nodes: int = 100,
                  require_edge: bool = True) -> Graph:
    """Vertex-induced subgraph around a node index or an edge pair.

    Nodes within `hops` of the target (either endpoint for an edge) are kept
    in BFS-discovery order, targets first, truncated at `max_nodes`; edges are
    exactly the original edges among kept nodes. `node_ids` records original
    indices, targets at positions 0 (and 1 for edge targets).
    `require_edge=False` admits node pairs that are not edges (candidate
    link endpoints).
    """
    if hops < 1:
        raise ValidationError("hops must be >= 1")
    n = graph.node_count
    if isinstance(target, (tuple, list, np.ndarray)):
        u, v = int(target[0]), int(target[1])
        if not (0 <= u < n and 0 <= v < n) or u == v:
            raise ValidationError(f"target pair ({u},{v}) invalid for {n} nodes")
        if require_edge and canonical_edge(u, v) not in graph.edge_set():
            raise ValidationError(f"target edge ({u},{v}) not in edge set")
        sources = [u, v]
        if max_nodes < 2:
            raise ValidationError("max_nodes must be >= 2 for edge targets")
    else:
        t = int(target)
        if not 0 <= t < n:
            raise ValidationError(f"target node {t} out of range for {n} nodes")
        sources = [t]
        if max_nodes < 1:
            raise ValidationError("max_nodes must be >= 1")

    nbrs = graph.neighbor_lists()
    dist = {s: 0 for s in sources}
    order = list(sources)
    queue = deque(sources)
    while queue:
        cur = queue.popleft()
        if dist[cur] == hops:
            continue
        for nb in nbrs[cur]:
            if nb not in dist:
                dist[nb] = dist[cur] + 1
                order.append(nb)
                queue.append(nb)

    selected = order[:max_nodes]
    local = {node: j for j, node in enumerate(selected)}
    sel_set = set(selected)
    edges = [
        (local[u], local[v]) for u, v in graph.edges if u in sel_set and v in sel_set
    ]
    edge_labels = None
    if graph.edge_labels:
        edge_labels = {
            canonical_edge(local[u], local[v]): l
            for (u, v), l in graph.edge_labels.items()
            if u in sel_set and v in sel_set
        } or None
    provenance = graph.node_ids if graph.node_ids is not None else np.arange(n, dtype=np.int64)
    return Graph(
        features=graph.features[selected].copy(),
        edges=edges,
        node_labels=graph.node_labels[selected].copy() if graph.node_labels is not None else None,
        edge_labels=edge_labels,
        graph_label=_copy_label(graph.graph_label),
        node_ids=provenance[selected].copy(),
    )


# ---------------------------------------------------------------------------
# Augmentations (views for pre-training; transformations for the error lab)
# ---------------------------------------------------------------------------

def augment(graph: Graph, kind: str, ratio: float, rng, per_dimension: bool = False) -> Graph:
    """Apply one stochastic view transformation; deterministic given the rng seed.

    Counts use floor(ratio * size). `per_dimension` masks individual feature
    cells instead of whole rows (off by default).
    """
    if kind not in AUGMENT_KINDS:
        raise ValidationError(f"unknown augmentation kind {kind!r}")
    if not 0.0 <= ratio <= 1.0:
        raise ValidationError(f"ratio {ratio} outside [0, 1]")
    if graph.node_count == 0:
        raise ValidationError("cannot augment an empty graph")
    rng = as_rng(rng)

    if kind == "identity":
        return graph.copy()

    if kind == "drop_nodes":
        n = graph.node_count
        k = math.floor(ratio * n)
        dropped = set(map(int, rng.choice(n, size=k, replace=False))) if k else set()
        survivors = [i for i in range(n) if i not in dropped]
        local = {node: j for j, node in enumerate(survivors)}
        edges = [
            (local[u], local[v])
            for u, v in graph.edges
            if u not in dropped and v not in dropped
        ]
        edge_labels = None
        if graph.edge_labels:
            edge_labels = {
                canonical_edge(local[u], local[v]): l
                for (u, v), l in graph.edge_labels.items()
                if u not in dropped and v not in dropped
            } or None
        provenance = graph.node_ids if graph.node_ids is not None else np.arange(n, dtype=np.int64)
        return Graph(
            features=graph.features[survivors].copy(),
            edges=edges,
            node_labels=graph.node_labels[survivors].copy() if graph.node_labels is not None else None,
            edge_labels=edge_labels,
            graph_label=_copy_label(graph.graph_label),
            node_ids=provenance[survivors].copy(),
        )

    if kind == "drop_edges":
        m = graph.edge_count
        k = math.floor(ratio * m)
        dropped = set(map(int, rng.choice(m, size=k, replace=False))) if k else set()
        out = graph.copy()
        kept = [e for i, e in enumerate(graph.edges) if i not in dropped]
        out.edges = kept
        if out.edge_labels:
            kept_set = set(kept)
            out.edge_labels = {e: l for e, l in out.edge_labels.items() if e in kept_set} or None
        return out

    # mask_features
    out = graph.copy()
    if per_dimension:
        total = graph.node_count * graph.feature_dim
        k = math.floor(ratio * total)
        if k:
            flat = rng.choice(total, size=k, replace=False)
            out.features.ravel()[flat] = 0.0
    else:
        k = math.floor(ratio * graph.node_count)
        if k:
            rows = rng.choice(graph.node_count, size=k, replace=False)
            out.features[rows] = 0.0
    return out


# ---------------------------------------------------------------------------
# Synthetic corpora (desk-scale stand-ins for the public benchmark datasets)
# ---------------------------------------------------------------------------

@dataclass
class SynthSpec:
    """Planted-partition generator parameters for a graph-level corpus.

    Each class gets its own feature centroid (norm `class_sep`) and an edge
    density scaled by `1 + class_index * density_step`, so class identity is
    recoverable from both mean features and density.
    """

    num_classes: int = 2
    graphs_per_class: int = 10
    min_nodes: int = 20
    max_nodes: int = 50
    p_intra: float = 0.2
    p_inter: float = 0.05
    feature_dim: int = 8
    class_sep: float = 2.0
    noise: float = 0.5
    density_step: float = 0.3
    name: str = "synthetic"

    def validate(self):
        if self.num_classes < 2:
            raise ValidationError("num_classes must be >= 2")
        if self.graphs_per_class < 1:
            raise ValidationError("graphs_per_class must be >= 1")
        if not 1 <= self.min_nodes <= self.max_nodes:
            raise ValidationError("need 1 <= min_nodes <= max_nodes")
        for p in (self.p_intra, self.p_inter):
            if not 0.0 <= p <= 1.0:
                raise ValidationError(f"edge probability {p} outside [0, 1]")
        if self.feature_dim < 1:
            raise ValidationError("feature_dim must be >= 1")
        if self.noise < 0 or self.class_sep < 0 or self.density_step < 0:
            raise ValidationError("class_sep, noise, density_step must be >= 0")


def _class_centroids(num_classes: int, dim: int, sep: float, rng) -> np.ndarray:
    mus = rng.normal(size=(num_classes, dim))
    mus /= np.linalg.norm(mus, axis=1, keepdims=True)
    return sep * mus


def _planted_partition_edges(n: int, blocks: np.ndarray, p_intra: float, p_inter: float, rng):
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            p = p_intra if blocks[u] == blocks[v] else p_inter
            if rng.random() < p:
                edges.append((u, v))
    return edges


def synthesize_dataset(spec: SynthSpec, rng) -> Dataset:
    """Generate a balanced multi-graph classification corpus."""
    spec.validate()
    rng = as_rng(rng)
    mus = _class_centroids(spec.num_classes, spec.feature_dim, spec.class_sep, rng)
    graphs = []
    for c in range(spec.num_classes):
        scale = 1.0 + c * spec.density_step
        p_intra = min(1.0, spec.p_intra * scale)
        p_inter = min(1.0, spec.p_inter * scale)
        for _ in range(spec.graphs_per_class):
            n = int(rng.integers(spec.min_nodes, spec.max_nodes + 1))
            blocks = rng.integers(0, 2, size=n)
            edges = _planted_partition_edges(n, blocks, p_intra, p_inter, rng)
            feats = mus[c] + spec.noise * rng.normal(size=(n, spec.feature_dim))
            graphs.append(Graph(features=feats, edges=edges, graph_label=c))
    return Dataset(
        graphs=graphs,
        num_classes=spec.num_classes,
        feature_dim=spec.feature_dim,
        task_kind="graph",
        name=spec.name,
    )


def synthesize_node_graph(
    num_classes: int,
    nodes_per_class: int,
    feature_dim: int,
    p_intra: float = 0.1,
    p_inter: float = 0.01,
    class_sep: float = 2.0,
    noise: float = 0.5,
    rng=None,
    label_edges: bool = False,
    edge_label_mode: str = "same_block",
    name: str = "synthetic-nodes",
) -> Dataset:
    """Generate one planted-partition graph with labeled nodes.

    Block membership is the node label. With `label_edges` the corpus
    doubles as an edge-level task: `same_block` marks within-block edges
    (binary), `block_pair` labels each edge by the unordered pair of
    endpoint blocks it connects.
    """
    if num_classes < 2 or nodes_per_class < 1:
        raise ValidationError("need num_classes >= 2 and nodes_per_class >= 1")
    for p in (p_intra, p_inter):
        if not 0.0 <= p <= 1.0:
            raise ValidationError(f"edge probability {p} outside [0, 1]")
    rng = as_rng(rng)
    n = num_classes * nodes_per_class
    labels = np.repeat(np.arange(num_classes), nodes_per_class)
    perm = rng.permutation(n)
    labels = labels[perm]
    mus = _class_centroids(num_classes, feature_dim, class_sep, rng)
    edges = _planted_partition_edges(n, labels, p_intra, p_inter, rng)
    feats = mus[labels] + noise * rng.normal(size=(n, feature_dim))
    edge_labels = None
    task_kind = "node"
    k = num_classes
    if label_edges:
        if edge_label_mode == "same_block":
            edge_labels = {e: int(labels[e[0]] == labels[e[1]])
                           for e in canonical_edges(edges)}
            k = 2
        elif edge_label_mode == "block_pair":
            pairs = [(a, b) for a in range(num_classes)
                     for b in range(a, num_classes)]
            index = {p: i for i, p in enumerate(pairs)}
            edge_labels = {e: index[tuple(sorted((labels[e[0]], labels[e[1]])))]
                           for e in canonical_edges(edges)}
            k = len(pairs)
        else:
            raise ValidationError(f"unknown edge_label_mode {edge_label_mode!r}")
        task_kind = "edge"
    g = Graph(features=feats, edges=edges, node_labels=labels, edge_labels=edge_labels)
    return Dataset(graphs=[g], num_classes=k, feature_dim=feature_dim, task_kind=task_kind, name=name)


def synthesize_regression_dataset(
    num_graphs: int = 40,
    min_nodes: int = 10,
    max_nodes: int = 30,
    feature_dim: int = 8,
    num_targets: int = 3,
    edge_p: float = 0.15,
    noise: float = 0.05,
    rng=None,
    name: str = "synthetic-regression",
) -> Dataset:
    """Random graphs with vector targets that are linear in graph statistics.

    Targets mix mean node features and edge density through a fixed random
    matrix, so a graph embedding carries enough signal to regress them.
    """
    if num_graphs < 1 or num_targets < 1:
        raise ValidationError("need num_graphs >= 1 and num_targets >= 1")
    if not 1 <= min_nodes <= max_nodes:
        raise ValidationError("need 1 <= min_nodes <= max_nodes")
    rng = as_rng(rng)
    mixer = rng.normal(size=(num_targets, feature_dim + 1))
    graphs = []
    for _ in range(num_graphs):
        n = int(rng.integers(min_nodes, max_nodes + 1))
        feats = rng.normal(size=(n, feature_dim))
        edges = [(u, v) for u in range(n) for v in range(u + 1, n)
                 if rng.random() < edge_p]
        density = 2.0 * len(edges) / (n * (n - 1)) if n > 1 else 0.0
        stats = np.concatenate([feats.mean(axis=0), [density]])
        target = mixer @ stats + noise * rng.normal(size=num_targets)
        graphs.append(Graph(features=feats, edges=edges, graph_label=target))
    return Dataset(graphs=graphs, num_classes=0, feature_dim=feature_dim,
                   task_kind="regression", name=name)
