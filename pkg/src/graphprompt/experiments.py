"""Experiment orchestration: training schemes, transfer runs, and reports.

Four schemes are compared on identical episodes per seed:

* ``supervised``: backbone + head trained from scratch on the support set.
* ``pretrain_finetune``: contrastive pre-training, then full fine-tuning.
* ``prompt``: contrastive pre-training, frozen backbone, prompt + head tuning.
* ``meta_prompt``: as ``prompt``, with a meta-learned prompt initialization.

Every random draw is a child stream of the experiment seed, so scheme
choice never shifts episode sampling; paired comparisons across schemes
see the same support/query sets.
"""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from .backbone import GCNBackbone, PreparedBatch, init_backbone
from .config import (SCHEMES, TRANSFER_SCHEMES, DatasetSpec, ExperimentConfig,
                     TaskSpec)
from .data import (Dataset, SynthSpec, load_dataset, synthesize_dataset,
                   synthesize_node_graph, synthesize_regression_dataset)
from .errors import (ConfigError, ContractError, DomainTransferError,
                     NumericError, ValidationError)
from .meta import meta_train
from .metrics import compute_metrics, ranking_metrics
from .pretrain import pretrain
from .prompt import (PromptGraph, TaskHead, TuneConfig, init_head, init_prompt,
                     labels_to_tensor, prompted_set, tune_prompt)
from .seeding import child_rng, child_seed
from .tasks import (TaskEpisode, episode_manifest, link_episode,
                    link_pair_graph, link_prediction_split, reformulate_task,
                    sample_few_shot, sample_regression_episode)

CLASSIFICATION_LEVELS = ("node", "edge", "graph")


def metric_keys_for(level: str) -> list:
    if level in CLASSIFICATION_LEVELS:
        return ["accuracy", "macro_f1", "auc"]
    if level == "regression":
        return ["mae", "mse"]
    if level == "link":
        return ["mrr", "hit@1", "hit@5", "hit@10"]
    raise ConfigError(f"unknown task level {level!r}")


def materialize_dataset(spec: DatasetSpec) -> Dataset:
    """Load a dataset directory or generate a synthetic corpus."""
    if spec.path:
        return load_dataset(spec.path)
    params = dict(spec.synthetic)
    kind = params.pop("kind")
    seed = params.pop("seed", 0)
    name = params.pop("name", f"synthetic-{kind}")
    rng = child_rng(seed, 101)
    if kind == "graph":
        sspec = SynthSpec(
            num_classes=params.get("num_classes", 2),
            graphs_per_class=params.get("graphs_per_class", 10),
            min_nodes=params.get("min_nodes", 20),
            max_nodes=params.get("max_nodes", 50),
            p_intra=params.get("p_intra", 0.2),
            p_inter=params.get("p_inter", 0.05),
            feature_dim=params.get("feature_dim", 8),
            class_sep=params.get("class_sep", 2.0),
            noise=params.get("noise", 0.5),
            density_step=params.get("density_step", 0.3),
            name=name,
        )
        return synthesize_dataset(sspec, rng)
    if kind in ("node", "edge", "link"):
        ds = synthesize_node_graph(
            num_classes=params.get("num_classes", 3 if kind == "node" else 2),
            nodes_per_class=params.get("nodes_per_class", 150),
            feature_dim=params.get("feature_dim", 8),
            p_intra=params.get("p_intra", 0.1),
            p_inter=params.get("p_inter", 0.01),
            class_sep=params.get("class_sep", 2.0),
            noise=params.get("noise", 0.5),
            rng=rng,
            label_edges=(kind == "edge"),
            edge_label_mode=params.get("edge_label_mode", "same_block"),
            name=name,
        )
        if kind == "link":
            return Dataset(graphs=ds.graphs, num_classes=2,
                           feature_dim=ds.feature_dim, task_kind="link", name=name)
        return ds
    if kind == "regression":
        return synthesize_regression_dataset(
            num_graphs=params.get("num_graphs", 40),
            min_nodes=params.get("min_nodes", 10),
            max_nodes=params.get("max_nodes", 30),
            feature_dim=params.get("feature_dim", 8),
            num_targets=params.get("num_targets", 3),
            edge_p=params.get("edge_p", 0.15),
            noise=params.get("noise", 0.05),
            rng=rng,
            name=name,
        )
    raise ConfigError(f"unknown synthetic dataset kind {kind!r}")


def build_task_dataset(dataset: Dataset, task: TaskSpec):
    """Graph-level instance corpus for the requested level; link is per-seed."""
    if task.level in ("node", "edge"):
        return reformulate_task(dataset, task.level, task.hops, task.max_nodes)
    if task.level == "graph":
        if dataset.task_kind != "graph":
            raise ConfigError(
                f"graph-level task needs a graph-labeled dataset, got {dataset.task_kind!r}")
        return dataset
    if task.level == "regression":
        if dataset.task_kind != "regression":
            raise ConfigError(
                f"regression task needs vector targets, got {dataset.task_kind!r}")
        return dataset
    return None


def _best_iterate_fit(loss_fn, params, opt, steps: int, what: str) -> list:
    """Shared Adam loop: track and restore the lowest-loss iterate."""
    trace = []
    best = (float("inf"), None)
    for step in range(steps + 1):
        loss = loss_fn()
        value = float(loss.detach())
        if not np.isfinite(value):
            raise NumericError(f"non-finite {what} loss at step {step}")
        trace.append(value)
        if value < best[0]:
            best = (value, [p.detach().clone() for p in params])
        if step == steps:
            break
        opt.zero_grad()
        loss.backward()
        opt.step()
    with torch.no_grad():
        for p, s in zip(params, best[1]):
            p.copy_(s)
    return trace


def fit_joint(model: GCNBackbone, head: TaskHead, pairs, steps: int, lr: float) -> list:
    """Train backbone and head together on labeled graphs (no prompt)."""
    if model.frozen:
        raise ContractError("cannot fit a frozen backbone; unfreeze first")
    if not pairs:
        raise ValidationError("fit_joint needs at least one labeled graph")
    prep = PreparedBatch([g for g, _ in pairs])
    labels = labels_to_tensor(head, [y for _, y in pairs])
    params = list(model.parameters()) + list(head.parameters())
    opt = torch.optim.Adam(params, lr=lr)

    def loss_fn():
        return head.loss(head.logits(prep.embed(model)), labels)

    return _best_iterate_fit(loss_fn, params, opt, steps, "fit")


def fit_head(model: GCNBackbone, head: TaskHead, pairs, steps: int, lr: float) -> list:
    """Linear probe: train only the head on frozen embeddings."""
    if not pairs:
        raise ValidationError("fit_head needs at least one labeled graph")
    with torch.no_grad():
        z = PreparedBatch([g for g, _ in pairs]).embed(model)
    labels = labels_to_tensor(head, [y for _, y in pairs])
    params = list(head.parameters())
    opt = torch.optim.Adam(params, lr=lr)

    def loss_fn():
        return head.loss(head.logits(z), labels)

    return _best_iterate_fit(loss_fn, params, opt, steps, "probe")


def predict_scores(model: GCNBackbone, head: TaskHead, graphs,
                   prompt: PromptGraph = None) -> np.ndarray:
    with torch.no_grad():
        if prompt is None:
            z = PreparedBatch(graphs).embed(model)
        else:
            z = prompted_set(prompt, graphs).embed(prompt, model)
        return head.predict(z).numpy()


@dataclass
class _SeedTask:
    """Everything one seed's evaluation needs, shared across schemes."""
    episode: TaskEpisode
    query_graphs: list = field(default_factory=list)
    query_labels: list = field(default_factory=list)
    query_groups: list = field(default_factory=list)  # link: graphs, positive first
    target_mean: np.ndarray = None  # regression standardization (from support)
    target_std: np.ndarray = None
    corpus: Dataset = None  # pre-training corpus for this seed


class _Engine:
    """Builds per-seed tasks once and runs schemes against them."""

    def __init__(self, config: ExperimentConfig):
        config.validate()
        self.c = config
        self.dataset = materialize_dataset(config.dataset)
        self.level = config.task.level
        self.metric_keys = metric_keys_for(self.level)
        self.tds = build_task_dataset(self.dataset, config.task)
        if self.level == "link" and len(self.dataset.graphs) != 1:
            raise ConfigError("link tasks need a single-graph dataset")
        self._tasks = {}
        self._pretrained = {}

    def check_scheme(self, scheme: str) -> None:
        if scheme not in SCHEMES:
            raise ConfigError(f"unknown training scheme {scheme!r}")
        if scheme == "meta_prompt" and self.level not in CLASSIFICATION_LEVELS:
            raise ConfigError("meta_prompt supports node/edge/graph levels only")

    def label_ratio(self):
        if self.level in CLASSIFICATION_LEVELS and self.tds is not None:
            total = len(self.tds.graphs)
            return (self.c.task.shots * self.tds.num_classes) / total if total else None
        return None

    # -- per-seed task construction -------------------------------------
    def seed_task(self, seed: int) -> _SeedTask:
        if seed in self._tasks:
            return self._tasks[seed]
        t = self.c.task
        if self.level in CLASSIFICATION_LEVELS:
            episode = sample_few_shot(self.tds, t.shots, t.query_per_class,
                                      child_rng(seed, 11), seed=seed)
            task = _SeedTask(
                episode=episode,
                query_graphs=[g for g, _ in episode.query],
                query_labels=[y for _, y in episode.query],
                corpus=self.tds,
            )
        elif self.level == "regression":
            episode = sample_regression_episode(self.tds, t.shots, t.query_per_class,
                                                child_rng(seed, 11), seed=seed)
            sup = np.stack([np.atleast_1d(np.asarray(y, dtype=np.float64))
                            for _, y in episode.support])
            std = np.maximum(sup.std(axis=0), 1e-12)
            task = _SeedTask(
                episode=episode,
                query_graphs=[g for g, _ in episode.query],
                query_labels=[np.atleast_1d(np.asarray(y, dtype=np.float64))
                              for _, y in episode.query],
                target_mean=sup.mean(axis=0),
                target_std=std,
                corpus=self.tds,
            )
        else:  # link
            graph = self.dataset.graphs[0]
            msg, train_pairs, test_pairs = link_prediction_split(
                graph, negatives_per_positive_train=t.negatives_train,
                negatives_per_positive_test=t.negatives_test,
                rng=child_rng(seed, 13))
            episode = link_episode(msg, train_pairs, t.hops, t.max_nodes,
                                   dataset_name=self.dataset.name, seed=seed)
            groups = {}
            for p in test_pairs:
                groups.setdefault(p.group, []).append(p)
            query_groups = []
            for gid in sorted(groups):
                members = groups[gid]  # positive first by construction
                query_groups.append([link_pair_graph(msg, p, t.hops, t.max_nodes)
                                     for p in members])
            corpus = Dataset(graphs=[g for g, _ in episode.support],
                             num_classes=2, feature_dim=self.dataset.feature_dim,
                             task_kind="graph", name=self.dataset.name + ":pairs")
            task = _SeedTask(episode=episode, query_groups=query_groups,
                             corpus=corpus)
        self._tasks[seed] = task
        return task

    # -- models ----------------------------------------------------------
    def fresh_backbone(self, seed: int) -> GCNBackbone:
        b = self.c.backbone
        return init_backbone(self.dataset.feature_dim, hidden_dim=b.hidden_dim,
                             depth=b.depth, activation=b.activation,
                             readout=b.readout, rng=child_rng(seed, 17))

    def pretrained_backbone(self, seed: int) -> GCNBackbone:
        if seed not in self._pretrained:
            model = self.fresh_backbone(seed)
            corpus = self.seed_task(seed).corpus
            pcfg = replace(self.c.pretrain, seed=child_seed(seed, 3))
            pretrain(corpus, model, pcfg)
            self._pretrained[seed] = model
        return copy.deepcopy(self._pretrained[seed])

    def _head(self, seed: int) -> TaskHead:
        hidden = self.c.backbone.hidden_dim
        if self.level in CLASSIFICATION_LEVELS:
            return init_head(hidden, self.tds.num_classes, "classify",
                             rng=child_rng(seed, 23))
        if self.level == "regression":
            arity = self.seed_task(seed).episode.target_arity
            return init_head(hidden, arity, "regress", rng=child_rng(seed, 23))
        return init_head(hidden, 1, "link_score", rng=child_rng(seed, 23))

    def _support_pairs(self, task: _SeedTask):
        if self.level == "regression":
            return [(g, (np.atleast_1d(np.asarray(y, dtype=np.float64))
                         - task.target_mean) / task.target_std)
                    for g, y in task.episode.support]
        return task.episode.support

    def _tuning_episode(self, task: _SeedTask) -> TaskEpisode:
        ep = task.episode
        if self.level != "regression":
            return ep
        return TaskEpisode(level=ep.level, support=self._support_pairs(task),
                           query=[], target_arity=ep.target_arity,
                           provenance=ep.provenance,
                           support_indices=list(ep.support_indices))

    def _meta_episodes(self, seed: int, task: _SeedTask) -> list:
        pool_idx = sorted(set(range(len(self.tds.graphs)))
                          - set(task.episode.query_indices))
        pool = Dataset(graphs=[self.tds.graphs[i] for i in pool_idx],
                       num_classes=self.tds.num_classes,
                       feature_dim=self.tds.feature_dim, task_kind="graph",
                       name=self.tds.name + ":pool")
        rng = child_rng(seed, 41)
        mt = self.c.meta_tasks
        return [sample_few_shot(pool, mt.task_shots, mt.task_query, rng)
                for _ in range(mt.train_tasks)]

    # -- scheme execution --------------------------------------------------
    def run_scheme_seed(self, scheme: str, seed: int) -> dict:
        self.check_scheme(scheme)
        task = self.seed_task(seed)
        head = self._head(seed)
        tune_cfg = TuneConfig(steps=self.c.tune.steps,
                              learning_rate=self.c.tune.learning_rate,
                              seed=child_seed(seed, 29))
        prompt = None
        if scheme == "supervised":
            model = self.fresh_backbone(seed)
            fit_joint(model, head, self._support_pairs(task),
                      tune_cfg.steps, tune_cfg.learning_rate)
        elif scheme == "pretrain_finetune":
            model = self.pretrained_backbone(seed)
            fit_joint(model, head, self._support_pairs(task),
                      tune_cfg.steps, tune_cfg.learning_rate)
        elif scheme == "prompt":
            model = self.pretrained_backbone(seed)
            model.freeze()
            prompt = self._init_prompt(seed)
            tune_prompt(prompt, head, [self._tuning_episode(task)], model, tune_cfg)
        else:  # meta_prompt
            model = self.pretrained_backbone(seed)
            model.freeze()
            prompt = self._init_prompt(seed)
            mcfg = replace(self.c.meta, seed=child_seed(seed, 31))
            meta_train(prompt, head, self._meta_episodes(seed, task), model, mcfg)
            tune_prompt(prompt, head, [self._tuning_episode(task)], model, tune_cfg)
        return self.evaluate(model, head, task, prompt)

    def _init_prompt(self, seed: int) -> PromptGraph:
        p = self.c.prompt
        return init_prompt(p.num_tokens, self.dataset.feature_dim,
                           p.structure_mode, p.insert_mode, p.delta,
                           rng=child_rng(seed, 19))

    def evaluate(self, model: GCNBackbone, head: TaskHead, task: _SeedTask,
                 prompt: PromptGraph = None) -> dict:
        if self.level in CLASSIFICATION_LEVELS:
            scores = predict_scores(model, head, task.query_graphs, prompt)
            return compute_metrics(scores, task.query_labels, self.level)
        if self.level == "regression":
            raw = predict_scores(model, head, task.query_graphs, prompt)
            preds = raw * task.target_std + task.target_mean
            return compute_metrics(preds, np.stack(task.query_labels), "regression")
        score_lists = [predict_scores(model, head, group, prompt).reshape(-1)
                       for group in task.query_groups]
        return ranking_metrics(score_lists, [0] * len(score_lists))


# ---------------------------------------------------------------------------
# Reports


def code_hash() -> str:
    """Digest of the package's source files; ties reports to the code."""
    pkg_dir = os.path.dirname(os.path.abspath(__file__))
    h = hashlib.sha256()
    for fname in sorted(os.listdir(pkg_dir)):
        if fname.endswith(".py"):
            h.update(fname.encode("utf-8"))
            with open(os.path.join(pkg_dir, fname), "rb") as fh:
                h.update(fh.read())
    return h.hexdigest()


def _config_echo(config: ExperimentConfig) -> dict:
    if config.raw:
        return config.raw
    echo = dataclasses.asdict(config)
    echo.pop("raw", None)
    return echo


def config_hash(config: ExperimentConfig) -> str:
    blob = json.dumps(_config_echo(config), sort_keys=True, default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def improvement_percent(prompt_mean: float, other_means) -> float:
    """Mean improvement of the prompt row over every non-prompt row."""
    others = list(other_means)
    if not others:
        raise ValidationError("need at least one non-prompt row")
    return float(np.mean([prompt_mean - o for o in others]))


@dataclass
class ResultsReport:
    kind: str  # experiment | comparison | transfer
    task_level: str
    metric_keys: list
    schemes: list
    rows: list  # {"scheme", "seed", "metrics"}
    summary: list  # {"scheme", "mean", "std", "seed_count"}
    imp_percent: dict | None
    label_ratio: float | None
    config_echo: dict
    config_hash: str
    code_hash: str
    episode_manifests: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    wall_clock_seconds: float = 0.0

    def to_json_obj(self) -> dict:
        # wall clock stays out: identical runs must serialize identically
        return {
            "kind": self.kind,
            "task_level": self.task_level,
            "metric_keys": list(self.metric_keys),
            "schemes": list(self.schemes),
            "rows": self.rows,
            "summary": self.summary,
            "imp_percent": self.imp_percent,
            "label_ratio": self.label_ratio,
            "config_echo": self.config_echo,
            "config_hash": self.config_hash,
            "code_hash": self.code_hash,
            "episode_manifests": self.episode_manifests,
            "failures": self.failures,
        }


def _summarize(rows, metric_keys, schemes):
    summary = []
    for scheme in schemes:
        metrics_list = [r["metrics"] for r in rows if r["scheme"] == scheme]
        if not metrics_list:
            summary.append({"scheme": scheme, "mean": {}, "std": {}, "seed_count": 0})
            continue
        mean = {m: float(np.mean([v[m] for v in metrics_list])) for m in metric_keys}
        std = {m: float(np.std([v[m] for v in metrics_list])) for m in metric_keys}
        summary.append({"scheme": scheme, "mean": mean, "std": std,
                        "seed_count": len(metrics_list)})
    return summary


def _imp_from_summary(summary, metric_keys, schemes):
    if "prompt" not in schemes or len(schemes) < 2:
        return None
    by_scheme = {s["scheme"]: s for s in summary}
    prompt_mean = by_scheme["prompt"]["mean"]
    if not prompt_mean:
        return None
    others = [by_scheme[s]["mean"] for s in schemes
              if s != "prompt" and by_scheme[s]["mean"]]
    if not others:
        return None
    return {m: improvement_percent(prompt_mean[m], [o[m] for o in others])
            for m in metric_keys}


def _build_report(kind: str, engine: _Engine, config: ExperimentConfig,
                  schemes, rows, failures, manifests, started: float) -> ResultsReport:
    summary = _summarize(rows, engine.metric_keys, schemes)
    return ResultsReport(
        kind=kind,
        task_level=engine.level,
        metric_keys=list(engine.metric_keys),
        schemes=list(schemes),
        rows=rows,
        summary=summary,
        imp_percent=_imp_from_summary(summary, engine.metric_keys, schemes),
        label_ratio=engine.label_ratio(),
        config_echo=_config_echo(config),
        config_hash=config_hash(config),
        code_hash=code_hash(),
        episode_manifests=manifests,
        failures=failures,
        wall_clock_seconds=time.perf_counter() - started,
    )


def _run_schemes(config: ExperimentConfig, schemes, kind: str) -> ResultsReport:
    engine = _Engine(config)
    for scheme in schemes:
        engine.check_scheme(scheme)  # fail before any compute
    started = time.perf_counter()
    rows, failures, manifests = [], [], []
    for scheme in schemes:
        for seed in config.seeds:
            try:
                metrics = engine.run_scheme_seed(scheme, seed)
            except NumericError as exc:
                failures.append({"scheme": scheme, "seed": seed, "error": str(exc)})
                continue
            rows.append({"scheme": scheme, "seed": seed, "metrics": metrics})
            if engine.level != "link":
                manifests.append({"scheme": scheme, "seed": seed,
                                  "manifest": episode_manifest(
                                      engine.seed_task(seed).episode)})
    report = _build_report(kind, engine, config, schemes, rows, failures,
                           manifests, started)
    if config.out_dir:
        render_report(report, config.out_dir)
    return report


def run_experiment(config: ExperimentConfig) -> ResultsReport:
    """Execute the configured scheme over all seeds and report."""
    return _run_schemes(config, [config.scheme], "experiment")


def compare_experiments(config: ExperimentConfig, schemes) -> ResultsReport:
    """Run several schemes on identical per-seed episodes; adds the IMP row."""
    if not schemes:
        raise ConfigError("compare_experiments needs at least one scheme")
    return _run_schemes(config, list(schemes), "comparison")


# ---------------------------------------------------------------------------
# Transfer


def transfer_experiment(config: ExperimentConfig) -> ResultsReport:
    """Evaluate hard/fine-tune/prompt transfer from a source to a target task.

    The backbone pre-trains on the source corpus and a source head is
    probe-fitted there; each scheme then faces identical target episodes.
    """
    if config.transfer is None:
        raise ConfigError("config has no transfer section")
    tr = config.transfer
    source_ds = materialize_dataset(DatasetSpec.from_section(tr.source))
    target_ds = materialize_dataset(config.dataset)
    if source_ds.feature_dim != target_ds.feature_dim:
        raise DomainTransferError(
            f"feature widths differ: source {source_ds.feature_dim}, "
            f"target {target_ds.feature_dim}; cross-domain alignment is unsupported")
    source_task = TaskSpec(level=tr.source_level, shots=config.task.shots,
                           query_per_class=config.task.query_per_class,
                           hops=config.task.hops, max_nodes=config.task.max_nodes)
    target_task = TaskSpec(level=tr.target_level, shots=config.task.shots,
                           query_per_class=config.task.query_per_class,
                           hops=config.task.hops, max_nodes=config.task.max_nodes)
    source_tds = build_task_dataset(source_ds, source_task)
    target_tds = build_task_dataset(target_ds, target_task)
    if source_tds.num_classes != target_tds.num_classes:
        raise DomainTransferError(
            f"class counts differ: source {source_tds.num_classes}, "
            f"target {target_tds.num_classes}; the source head cannot transfer")

    started = time.perf_counter()
    hidden = config.backbone.hidden_dim
    rows, failures, manifests = [], [], []
    for seed in config.seeds:
        try:
            model = init_backbone(source_ds.feature_dim, hidden_dim=hidden,
                                  depth=config.backbone.depth,
                                  activation=config.backbone.activation,
                                  readout=config.backbone.readout,
                                  rng=child_rng(seed, 17))
            pcfg = replace(config.pretrain, seed=child_seed(seed, 3))
            pretrain(source_tds, model, pcfg)
            model.freeze()
            source_episode = sample_few_shot(source_tds, config.task.shots,
                                             config.task.query_per_class,
                                             child_rng(seed, 37), seed=seed)
            source_head = init_head(hidden, source_tds.num_classes, "classify",
                                    rng=child_rng(seed, 23))
            fit_head(model, source_head, source_episode.support,
                     config.tune.steps, config.tune.learning_rate)
            target_episode = sample_few_shot(target_tds, config.task.shots,
                                             config.task.query_per_class,
                                             child_rng(seed, 11), seed=seed)
            query_graphs = [g for g, _ in target_episode.query]
            query_labels = [y for _, y in target_episode.query]
            manifests.append({"scheme": "shared", "seed": seed,
                              "manifest": episode_manifest(target_episode)})
            for scheme in tr.schemes:
                if scheme == "hard":
                    scores = predict_scores(model, source_head, query_graphs)
                elif scheme == "fine_tune":
                    ft_model = copy.deepcopy(model)
                    ft_model.unfreeze()
                    ft_head = source_head.copy()
                    fit_joint(ft_model, ft_head, target_episode.support,
                              config.tune.steps, config.tune.learning_rate)
                    scores = predict_scores(ft_model, ft_head, query_graphs)
                else:  # prompt
                    p = config.prompt
                    prompt = init_prompt(p.num_tokens, source_ds.feature_dim,
                                         p.structure_mode, p.insert_mode, p.delta,
                                         rng=child_rng(seed, 19))
                    p_head = source_head.copy()
                    tune_cfg = TuneConfig(steps=config.tune.steps,
                                          learning_rate=config.tune.learning_rate,
                                          seed=child_seed(seed, 29))
                    tune_prompt(prompt, p_head, [target_episode], model, tune_cfg)
                    scores = predict_scores(model, p_head, query_graphs, prompt)
                metrics = compute_metrics(scores, query_labels, tr.target_level)
                rows.append({"scheme": scheme, "seed": seed, "metrics": metrics})
        except NumericError as exc:
            failures.append({"scheme": "all", "seed": seed, "error": str(exc)})

    metric_keys = metric_keys_for(tr.target_level)
    summary = _summarize(rows, metric_keys, tr.schemes)
    report = ResultsReport(
        kind="transfer",
        task_level=tr.target_level,
        metric_keys=metric_keys,
        schemes=list(tr.schemes),
        rows=rows,
        summary=summary,
        imp_percent=_imp_from_summary(summary, metric_keys, tr.schemes),
        label_ratio=None,
        config_echo=_config_echo(config),
        config_hash=config_hash(config),
        code_hash=code_hash(),
        episode_manifests=manifests,
        failures=failures,
        wall_clock_seconds=time.perf_counter() - started,
    )
    if config.out_dir:
        render_report(report, config.out_dir)
    return report


# ---------------------------------------------------------------------------
# Rendering


def report_json_text(report: ResultsReport) -> str:
    return json.dumps(report.to_json_obj(), indent=2, sort_keys=True) + "\n"


def report_from_json_obj(obj: dict) -> ResultsReport:
    """Rebuild a report from its JSON form (wall clock is not persisted)."""
    try:
        return ResultsReport(
            kind=obj["kind"],
            task_level=obj["task_level"],
            metric_keys=list(obj["metric_keys"]),
            schemes=list(obj["schemes"]),
            rows=list(obj["rows"]),
            summary=list(obj["summary"]),
            imp_percent=obj.get("imp_percent"),
            label_ratio=obj.get("label_ratio"),
            config_echo=obj.get("config_echo", {}),
            config_hash=obj.get("config_hash", ""),
            code_hash=obj.get("code_hash", ""),
            episode_manifests=list(obj.get("episode_manifests", [])),
            failures=list(obj.get("failures", [])),
        )
    except KeyError as exc:
        raise ConfigError(f"report JSON is missing field {exc}") from exc


def report_markdown(report: ResultsReport) -> str:
    lines = [f"# {report.kind} report ({report.task_level} level)", ""]
    lines.append(f"config hash: `{report.config_hash[:16]}`  ")
    lines.append(f"code hash: `{report.code_hash[:16]}`")
    if report.label_ratio is not None:
        lines.append(f"\nlabel ratio: {report.label_ratio:.4f}")
    lines.append("\n## summary\n")
    header = "| scheme | " + " | ".join(report.metric_keys) + " |"
    lines.append(header)
    lines.append("|---" * (len(report.metric_keys) + 1) + "|")
    for s in report.summary:
        if not s["mean"]:
            cells = " | ".join("-" for _ in report.metric_keys)
        else:
            cells = " | ".join(
                f"{s['mean'][m]:.4f} ± {s['std'][m]:.4f}" for m in report.metric_keys)
        lines.append(f"| {s['scheme']} | {cells} |")
    if report.imp_percent:
        lines.append("\n## IMP (%)\n")
        lines.append("| metric | improvement |")
        lines.append("|---|---|")
        for m in report.metric_keys:
            lines.append(f"| {m} | {report.imp_percent[m]:.4f} |")
    if report.rows:
        lines.append("\n## per-seed\n")
        lines.append("| scheme | seed | " + " | ".join(report.metric_keys) + " |")
        lines.append("|---" * (len(report.metric_keys) + 2) + "|")
        for r in report.rows:
            cells = " | ".join(f"{r['metrics'][m]:.4f}" for m in report.metric_keys)
            lines.append(f"| {r['scheme']} | {r['seed']} | {cells} |")
    if report.failures:
        lines.append("\n## failures\n")
        for f in report.failures:
            lines.append(f"- scheme {f['scheme']}, seed {f['seed']}: {f['error']}")
    lines.append(f"\n---\nwall clock: {report.wall_clock_seconds:.2f}s")
    return "\n".join(lines) + "\n"


def report_csv(report: ResultsReport) -> str:
    rows = ["scheme,seed,metric,value"]
    for r in report.rows:
        for m in report.metric_keys:
            rows.append(f"{r['scheme']},{r['seed']},{m},{r['metrics'][m]!r}")
    for s in report.summary:
        for stat in ("mean", "std"):
            for m in report.metric_keys:
                if s[stat]:
                    rows.append(f"{s['scheme']},{stat},{m},{s[stat][m]!r}")
    return "\n".join(rows) + "\n"


def render_report(report: ResultsReport, out_dir: str,
                  formats=("json", "markdown", "csv"), figures: bool = True) -> dict:
    """Write report files (and figures) into `out_dir`; returns written paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    if "json" in formats:
        paths["json"] = os.path.join(out_dir, "report.json")
        with open(paths["json"], "w", encoding="utf-8") as fh:
            fh.write(report_json_text(report))
    if "markdown" in formats:
        paths["markdown"] = os.path.join(out_dir, "report.md")
        with open(paths["markdown"], "w", encoding="utf-8") as fh:
            fh.write(report_markdown(report))
    if "csv" in formats:
        paths["csv"] = os.path.join(out_dir, "report.csv")
        with open(paths["csv"], "w", encoding="utf-8") as fh:
            fh.write(report_csv(report))
    if report.episode_manifests:
        paths["episodes"] = os.path.join(out_dir, "episodes.jsonl")
        with open(paths["episodes"], "w", encoding="utf-8") as fh:
            for entry in report.episode_manifests:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
    if figures and report.summary and any(s["mean"] for s in report.summary):
        from . import plotting
        series = {s["scheme"]: [s["mean"][m] for m in report.metric_keys]
                  for s in report.summary if s["mean"]}
        paths["fig_metrics"] = plotting.grouped_bars(
            report.metric_keys, series, os.path.join(out_dir, "fig_metrics.png"),
            title=f"{report.kind}: metric means by scheme", ylabel="value")
        first_scheme = report.schemes[0]
        seed_rows = [r for r in report.rows if r["scheme"] == first_scheme]
        if seed_rows:
            m0 = report.metric_keys[0]
            paths["fig_seeds"] = plotting.bar_chart(
                [r["seed"] for r in seed_rows],
                [r["metrics"][m0] for r in seed_rows],
                os.path.join(out_dir, "fig_seeds.png"),
                title=f"{first_scheme}: {m0} by seed", ylabel=m0)
    return paths
