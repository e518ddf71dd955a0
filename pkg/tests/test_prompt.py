"""Prompt graphs: construction, insertion, structure, tuning, checkpoints."""
import numpy as np
import pytest
import torch

from graphprompt.backbone import init_backbone
from graphprompt.data import Graph, SynthSpec, synthesize_dataset
from graphprompt.errors import ContractError, NumericError, ValidationError
from graphprompt.prompt import (PromptGraph, TaskHead, TuneConfig, checkpoint_load,
                                checkpoint_save, init_head, init_prompt, insert,
                                insert_features, labels_to_tensor, prompted_forward,
                                token_structure, tune_prompt)
from graphprompt.seeding import child_rng
from graphprompt.tasks import TaskEpisode

from conftest import finite_diff_grad, make_rng, random_graph


def frozen_backbone(feature_dim, hidden_dim=6, depth=2, seed=17, activation="relu"):
    model = init_backbone(feature_dim, hidden_dim=hidden_dim, depth=depth,
                          activation=activation, rng=child_rng(0, seed))
    model.freeze()
    return model


# ---------------------------------------------------------------- construction

def test_init_prompt_rejects_zero_tokens():
    with pytest.raises(ValidationError):
        init_prompt(0, 4)
    with pytest.raises(ValidationError):
        init_prompt(-1, 4)
    with pytest.raises(ValidationError):
        init_prompt(2, 0)


def test_init_prompt_shapes_and_defaults():
    prompt = init_prompt(3, 5, rng=make_rng(0))
    assert prompt.tokens.shape == (3, 5)
    assert prompt.structure_mode == "learnable"
    assert prompt.insert_mode == "weighted_feature_add"
    assert prompt.delta == 0.5
    # learnable structure starts at zero logits, one per unordered pair
    assert prompt.structure_params.shape == (3,)
    assert torch.all(prompt.structure_params == 0)


def test_init_prompt_token_scale_and_determinism():
    a = init_prompt(200, 40, rng=make_rng(9))
    b = init_prompt(200, 40, rng=make_rng(9))
    assert np.array_equal(a.tokens.detach().numpy(), b.tokens.detach().numpy())
    # Gaussian with std 0.02: sample std over 8000 draws lands close
    assert abs(float(a.tokens.detach().numpy().std()) - 0.02) < 0.002


def test_prompt_graph_validation():
    tokens = np.zeros((2, 3))
    with pytest.raises(ValidationError):
        PromptGraph(tokens, "nonsense", "weighted_feature_add", 0.5)
    with pytest.raises(ValidationError):
        PromptGraph(tokens, "learnable", "nonsense", 0.5)
    for delta in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(ValidationError):
            PromptGraph(tokens, "learnable", "weighted_feature_add", delta)
    with pytest.raises(ValidationError):
        PromptGraph(np.zeros(3), "learnable", "weighted_feature_add", 0.5)
    with pytest.raises(ValidationError):
        PromptGraph(np.zeros((0, 3)), "learnable", "weighted_feature_add", 0.5)
    # structure params only exist in learnable mode, and must cover all pairs
    with pytest.raises(ValidationError):
        PromptGraph(tokens, "independent", "weighted_feature_add", 0.5,
                    structure_params=np.zeros(1))
    with pytest.raises(ValidationError):
        PromptGraph(tokens, "learnable", "weighted_feature_add", 0.5,
                    structure_params=np.zeros(3))


# ------------------------------------------------------------- token structure

def test_token_structure_independent_is_empty():
    prompt = init_prompt(4, 3, structure_mode="independent", rng=make_rng(0))
    assert token_structure(prompt) == set()


def test_token_structure_orthogonal_boundary():
    # orthogonal tokens give sigmoid(0) = 0.5, and the threshold is strict
    tokens = np.eye(3)
    prompt = PromptGraph(tokens, "dot_threshold", "weighted_feature_add", 0.5)
    assert token_structure(prompt) == set()


def test_token_structure_matches_pairwise_oracle():
    for trial in range(25):
        rng = make_rng(100 + trial)
        tokens = rng.standard_normal((4, 6))
        prompt = PromptGraph(tokens, "dot_threshold", "weighted_feature_add", 0.5)
        want = set()
        for i in range(4):
            for j in range(i + 1, 4):
                score = 1.0 / (1.0 + np.exp(-float(tokens[i] @ tokens[j])))
                if score > 0.5:
                    want.add((i, j))
        assert token_structure(prompt) == want


def test_token_structure_learnable_uses_logits():
    prompt = init_prompt(3, 4, structure_mode="learnable", rng=make_rng(1))
    assert token_structure(prompt) == set()  # zero logits sit on the boundary
    with torch.no_grad():
        prompt.structure_params[1] = 4.0  # pair (0, 2)
    assert token_structure(prompt) == {(0, 2)}


# ----------------------------------------------------------- feature insertion

def test_weighted_insertion_fixed_oracle():
    # single node x = [1, 0], token p = [2, 0]: w = sigmoid(2), xhat = x + w p
    prompt = PromptGraph(np.array([[2.0, 0.0]]), "independent",
                         "weighted_feature_add", 0.5)
    x = torch.tensor([[1.0, 0.0]], dtype=torch.float64)
    got = insert_features(prompt, x).detach().numpy()
    w = 1.0 / (1.0 + np.exp(-2.0))
    assert abs(w - 0.8807970779778823) < 1e-15
    assert np.allclose(got, [[1.0 + 2.0 * w, 0.0]], atol=1e-12)
    assert abs(got[0, 0] - 2.7615941559557646) < 1e-12


def test_simple_insertion_adds_token_sum():
    prompt = PromptGraph(np.array([[1.0, 0.0], [0.0, 1.0]]), "independent",
                         "simple_feature_add", 0.5)
    x = torch.tensor([[1.0, 2.0]], dtype=torch.float64)
    got = insert_features(prompt, x).detach().numpy()
    assert np.allclose(got, [[2.0, 3.0]], atol=1e-15)


def test_zero_valued_tokens_are_identity():
    # sigmoid(0) = 0.5 does not clear a strict 0.5 threshold, so nothing moves
    prompt = PromptGraph(np.zeros((3, 4)), "learnable", "weighted_feature_add", 0.5)
    x = torch.from_numpy(make_rng(3).standard_normal((7, 4)))
    got = insert_features(prompt, x)
    assert torch.equal(got, x)


def test_weighted_insertion_weight_range_property():
    from graphprompt.prompt import _gated_weights
    for trial in range(50):
        rng = make_rng(500 + trial)
        delta = float(rng.uniform(0.05, 0.95))
        prompt = PromptGraph(rng.standard_normal((3, 5)), "independent",
                             "weighted_feature_add", delta)
        x = torch.from_numpy(rng.standard_normal((6, 5)))
        w = _gated_weights(x, prompt).detach().numpy()
        assert np.all((w == 0.0) | ((w > delta) & (w < 1.0)))
        # gate agrees with the raw sigmoid scores
        soft = 1.0 / (1.0 + np.exp(-(x.numpy() @ prompt.tokens.detach().numpy().T)))
        assert np.allclose(w[soft > delta], soft[soft > delta], atol=1e-12)
        assert np.all(w[soft <= delta] == 0.0)


def test_insert_feature_mode_keeps_structure():
    graph = random_graph(make_rng(11), min_nodes=6, max_nodes=6, feature_dim=4)
    prompt = init_prompt(2, 4, rng=make_rng(4))
    out = insert(prompt, graph)
    assert out.node_count == graph.node_count
    assert out.edges == graph.edges
    assert not np.array_equal(out.features, graph.features) or True  # may be identity
    with pytest.raises(ValidationError):
        insert(init_prompt(2, 3, rng=make_rng(4)), graph)  # dim mismatch


# ----------------------------------------------------------- subgraph insertion

def test_subgraph_insertion_counts_and_recovery():
    for trial in range(20):
        rng = make_rng(700 + trial)
        graph = random_graph(rng, min_nodes=4, max_nodes=9, feature_dim=4,
                             with_node_labels=True)
        k = int(rng.integers(1, 4))
        prompt = init_prompt(k, 4, insert_mode="subgraph", rng=rng)
        out = insert(prompt, graph)
        n = graph.node_count
        assert out.node_count == n + k
        # original edges survive untouched and all new edges touch a token
        original = set(graph.edges)
        kept = {e for e in out.edges if e[0] < n and e[1] < n}
        assert kept == original
        # token rows carry the token vectors; hosts keep their features
        assert np.allclose(out.features[:n], graph.features, atol=0)
        assert np.allclose(out.features[n:], prompt.tokens.detach().numpy(), atol=0)
        # token rows get sentinel labels; ids only exist when the host has them
        assert list(out.node_labels[n:]) == [-1] * k
        if graph.node_ids is not None:
            assert list(out.node_ids[n:]) == [-1] * k
        # dropping token rows recovers the host graph
        recovered = Graph(features=out.features[:n],
                          edges=sorted(kept),
                          node_labels=out.node_labels[:n])
        assert recovered.edges == graph.edges
        assert np.array_equal(recovered.features, graph.features)


def test_subgraph_cross_edges_follow_gate():
    rng = make_rng(77)
    graph = random_graph(rng, min_nodes=5, max_nodes=5, feature_dim=3)
    prompt = init_prompt(2, 3, insert_mode="subgraph", rng=rng)
    with torch.no_grad():
        prompt.tokens[0] = torch.tensor([4.0, 0.0, 0.0])
        prompt.tokens[1] = torch.tensor([-4.0, 0.0, 0.0])
    out = insert(prompt, graph)
    n = graph.node_count
    toks = prompt.tokens.detach().numpy()
    want = set(graph.edges)
    for i in range(n):
        for t in range(2):
            score = 1.0 / (1.0 + np.exp(-float(graph.features[i] @ toks[t])))
            if score > prompt.delta:
                want.add((i, n + t))
    # zero structure logits leave the two tokens unlinked
    assert set(out.edges) == want


def test_subgraph_zero_tokens_add_isolated_nodes():
    graph = random_graph(make_rng(5), min_nodes=4, max_nodes=4, feature_dim=3)
    prompt = PromptGraph(np.zeros((2, 3)), "learnable", "subgraph", 0.5)
    out = insert(prompt, graph)
    assert out.node_count == graph.node_count + 2
    assert set(out.edges) == set(graph.edges)


# -------------------------------------------------------------------- the head

def test_head_validation_and_predict():
    with pytest.raises(ValidationError):
        init_head(4, 3, kind="nonsense")
    with pytest.raises(ValidationError):
        TaskHead(np.zeros((2, 4)), np.zeros(2), kind="link_score")
    with pytest.raises(ValidationError):
        TaskHead(np.zeros((2, 4)), np.zeros(3))
    head = init_head(4, 3, rng=make_rng(23))
    z = torch.from_numpy(make_rng(1).standard_normal((5, 4)))
    probs = head.predict(z).detach().numpy()
    assert probs.shape == (5, 3)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)
    link = init_head(4, 1, kind="link_score", rng=make_rng(23))
    scores = link.predict(z).detach().numpy()
    assert scores.shape == (5, 1)
    assert np.all((scores > 0) & (scores < 1))


def test_labels_to_tensor_shapes():
    clf = init_head(4, 3, rng=make_rng(0))
    y = labels_to_tensor(clf, [0, 2, 1])
    assert y.dtype == torch.int64 and y.tolist() == [0, 2, 1]
    reg = init_head(4, 2, kind="regress", rng=make_rng(0))
    y = labels_to_tensor(reg, [np.array([1.0, 2.0]), np.array([3.0, 4.0])])
    assert y.shape == (2, 2) and y.dtype == torch.float64
    link = init_head(4, 1, kind="link_score", rng=make_rng(0))
    y = labels_to_tensor(link, [1.0, 0.0, 1.0])
    assert y.shape == (3,)


# ------------------------------------------------------------ prompted forward

def test_prompted_forward_zero_tokens_equals_raw():
    graph = random_graph(make_rng(2), min_nodes=6, max_nodes=6, feature_dim=4)
    model = frozen_backbone(4)
    prompt = PromptGraph(np.zeros((2, 4)), "learnable", "weighted_feature_add", 0.5)
    got = prompted_forward(prompt, graph, model)
    with torch.no_grad():
        _, want = model(graph)
    assert np.allclose(got, want.numpy(), atol=1e-12)


def test_prompted_forward_probabilities_sum_to_one():
    graph = random_graph(make_rng(6), min_nodes=5, max_nodes=5, feature_dim=4)
    model = frozen_backbone(4)
    prompt = init_prompt(3, 4, rng=make_rng(19))
    head = init_head(model.hidden_dim, 4, rng=make_rng(23))
    before = model.fingerprint()
    probs = prompted_forward(prompt, graph, model, head)
    assert probs.shape == (4,)
    assert abs(float(probs.sum()) - 1.0) < 1e-9
    assert model.fingerprint() == before


def test_prompted_forward_requires_frozen_model():
    graph = random_graph(make_rng(2), min_nodes=4, max_nodes=4, feature_dim=3)
    model = init_backbone(3, hidden_dim=4, depth=1, rng=make_rng(17))
    prompt = init_prompt(1, 3, rng=make_rng(19))
    with pytest.raises(ContractError):
        prompted_forward(prompt, graph, model)


# ---------------------------------------------------------------------- tuning

def make_episode(dataset, per_class=4):
    support, seen = [], {}
    for g in dataset.graphs:
        c = g.graph_label
        if seen.get(c, 0) < per_class:
            support.append((g, c))
            seen[c] = seen.get(c, 0) + 1
    return TaskEpisode(level="graph", support=support, query=[],
                       class_count=dataset.num_classes)


def test_tune_prompt_zero_steps_is_identity():
    graph = random_graph(make_rng(2), min_nodes=5, max_nodes=5, feature_dim=4)
    model = frozen_backbone(4)
    prompt = init_prompt(2, 4, rng=make_rng(19))
    head = init_head(model.hidden_dim, 2, rng=make_rng(23))
    before = prompt.tokens.detach().numpy().copy()
    episode = TaskEpisode(level="graph", support=[(graph, 0)], query=[],
                          class_count=2)
    out_prompt, out_head, trace = tune_prompt(prompt, head, [episode], model,
                                              TuneConfig(steps=0))
    assert trace == []
    assert np.array_equal(out_prompt.tokens.detach().numpy(), before)


def test_tune_prompt_separable_support_reaches_oracle():
    ds = synthesize_dataset(SynthSpec(num_classes=2, graphs_per_class=6,
                                      min_nodes=8, max_nodes=12, feature_dim=6,
                                      class_sep=3.0, noise=0.3),
                            make_rng(41))
    model = frozen_backbone(6, hidden_dim=8)
    episode = make_episode(ds)
    # independent oracle first: nearest class centroid on frozen embeddings
    with torch.no_grad():
        embs = np.stack([model(g)[1].numpy() for g, _ in episode.support])
    labels = np.array([y for _, y in episode.support])
    centroids = np.stack([embs[labels == c].mean(axis=0) for c in (0, 1)])
    d = ((embs[:, None, :] - centroids[None]) ** 2).sum(axis=2)
    assert np.array_equal(d.argmin(axis=1), labels), "support must be separable"

    prompt = init_prompt(3, 6, rng=make_rng(19))
    head = init_head(model.hidden_dim, 2, rng=make_rng(23))
    prompt, head, trace = tune_prompt(prompt, head, [episode], model,
                                      TuneConfig(steps=200, learning_rate=0.05))
    correct = 0
    for g, y in episode.support:
        probs = prompted_forward(prompt, g, model, head)
        correct += int(probs.argmax()) == y
    assert correct == len(episode.support)
    assert trace[-1] <= trace[0]


def test_tune_prompt_best_iterate_contract():
    ds = synthesize_dataset(SynthSpec(num_classes=2, graphs_per_class=3,
                                      min_nodes=6, max_nodes=8, feature_dim=4,
                                      class_sep=1.0, noise=0.5),
                            make_rng(8))
    model = frozen_backbone(4)
    episode = make_episode(ds, per_class=3)
    prompt = init_prompt(2, 4, rng=make_rng(19))
    head = init_head(model.hidden_dim, 2, rng=make_rng(23))
    before = model.fingerprint()
    # deliberately unstable rate so later steps overshoot the best iterate
    prompt, head, trace = tune_prompt(prompt, head, [episode], model,
                                      TuneConfig(steps=40, learning_rate=2.0))
    assert len(trace) == 41
    assert min(trace) <= trace[0]
    assert model.fingerprint() == before
    # restored parameters reproduce the best traced loss
    sets = [(g, y) for g, y in episode.support]
    from graphprompt.prompt import labels_to_tensor as l2t, prompted_set
    pset = prompted_set(prompt, [g for g, _ in sets])
    y = l2t(head, [c for _, c in sets])
    with torch.no_grad():
        loss = float(head.loss(head.logits(pset.embed(prompt, model)), y))
    assert abs(loss - min(trace)) < 1e-9


def test_tune_prompt_numeric_error_reports_step():
    graph = random_graph(make_rng(2), min_nodes=5, max_nodes=5, feature_dim=4)
    model = frozen_backbone(4)
    prompt = init_prompt(2, 4, rng=make_rng(19))
    head = init_head(model.hidden_dim, 2, kind="regress", rng=make_rng(23))
    episode = TaskEpisode(level="graph", support=[(graph, np.array([1.0, 0.0]))],
                          query=[], target_arity=2)
    with pytest.raises(NumericError, match="step"):
        tune_prompt(prompt, head, [episode], model,
                    TuneConfig(steps=10, learning_rate=1e200))


def test_tune_prompt_rejects_unfrozen_and_empty():
    graph = random_graph(make_rng(2), min_nodes=4, max_nodes=4, feature_dim=3)
    model = init_backbone(3, hidden_dim=4, depth=1, rng=make_rng(17))
    prompt = init_prompt(1, 3, rng=make_rng(19))
    head = init_head(4, 2, rng=make_rng(23))
    episode = TaskEpisode(level="graph", support=[(graph, 0)], query=[],
                          class_count=2)
    with pytest.raises(ContractError):
        tune_prompt(prompt, head, [episode], model, TuneConfig(steps=1))
    model.freeze()
    with pytest.raises(ValidationError):
        tune_prompt(prompt, head, [], model, TuneConfig(steps=1))
    with pytest.raises(ValidationError):
        tune_prompt(prompt, head, [episode], model, TuneConfig(steps=-1))


def test_task_loss_gradient_matches_finite_differences():
    # small hosts keep the finite-difference sweep cheap and well conditioned
    for trial in range(5):
        rng = make_rng(900 + trial)
        graphs = [random_graph(rng, min_nodes=4, max_nodes=8, feature_dim=3)
                  for _ in range(3)]
        labels = [int(rng.integers(0, 2)) for _ in graphs]
        model = frozen_backbone(3, hidden_dim=4, activation="tanh")
        prompt = init_prompt(2, 3, rng=rng)
        head = init_head(model.hidden_dim, 2, rng=rng)
        from graphprompt.prompt import prompted_set
        pset = prompted_set(prompt, graphs)
        y = labels_to_tensor(head, labels)

        def loss_value():
            return head.loss(head.logits(pset.embed(prompt, model)), y)

        loss = loss_value()
        loss.backward()
        got = prompt.tokens.grad.detach().numpy().copy()
        prompt.tokens.grad = None
        want = finite_diff_grad(lambda: float(loss_value().detach()),
                                prompt.tokens).numpy()
        denom = max(np.linalg.norm(want), 1e-12)
        assert np.linalg.norm(got - want) / denom < 1e-4


# ----------------------------------------------------------------- checkpoints

def test_prompt_checkpoint_roundtrip(tmp_path):
    prompt = init_prompt(3, 5, structure_mode="learnable", rng=make_rng(19))
    with torch.no_grad():
        prompt.structure_params[0] = 1.5
    head = init_head(7, 4, rng=make_rng(23))
    path = tmp_path / "prompt.ckpt"
    checkpoint_save(prompt, path, head)
    loaded, loaded_head = checkpoint_load(path)
    assert np.array_equal(loaded.tokens.detach().numpy(),
                          prompt.tokens.detach().numpy())
    assert np.array_equal(loaded.structure_params.detach().numpy(),
                          prompt.structure_params.detach().numpy())
    assert loaded.config() == prompt.config()
    assert loaded_head.config() == head.config()
    assert np.array_equal(loaded_head.weight.detach().numpy(),
                          head.weight.detach().numpy())


def test_prompt_checkpoint_headless_roundtrip(tmp_path):
    prompt = init_prompt(2, 3, structure_mode="independent",
                         insert_mode="subgraph", rng=make_rng(19))
    path = tmp_path / "p.ckpt"
    checkpoint_save(prompt, path)
    loaded, head = checkpoint_load(path)
    assert head is None
    assert loaded.structure_params is None
    assert loaded.insert_mode == "subgraph"
