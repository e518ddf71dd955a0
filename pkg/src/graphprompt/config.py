"""Configuration loading and validation.

Experiments are described by one declarative YAML (or JSON) document with
flat sections mirroring the module configs. Every section is
schema-checked before any compute starts; unknown keys are rejected so
typos fail fast.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError
from .meta import MetaConfig
from .pretrain import OBJECTIVES, PretrainConfig
from .prompt import INSERT_MODES, STRUCTURE_MODES, TuneConfig

SCHEMES = ("supervised", "pretrain_finetune", "prompt", "meta_prompt")
TRANSFER_SCHEMES = ("hard", "fine_tune", "prompt")
TASK_LEVELS = ("node", "edge", "graph", "link", "regression")

TOP_LEVEL_SECTIONS = ("dataset", "task", "backbone", "pretrain", "prompt",
                      "tune", "meta", "eval", "transfer", "errorlab", "out_dir")


def _expect_mapping(value, name: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    return dict(value)


def _only_keys(section: dict, allowed, name: str) -> None:
    extra = sorted(set(section) - set(allowed))
    if extra:
        raise ConfigError(f"section {name!r} has unknown keys: {', '.join(extra)}")


def _int_field(section, key, default, name, minimum=None):
    value = section.get(key, default)
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(f"{name}.{key} must be an integer")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{name}.{key} must be >= {minimum}")
    return value


def _float_field(section, key, default, name, positive=False):
    value = section.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name}.{key} must be a number")
    value = float(value)
    if positive and value <= 0:
        raise ConfigError(f"{name}.{key} must be positive")
    return value


def _choice_field(section, key, default, name, choices):
    value = section.get(key, default)
    if value not in choices:
        raise ConfigError(f"{name}.{key} must be one of {', '.join(choices)}")
    return value


def _aug_pair(section, key, default, name):
    value = section.get(key, default)
    if (not isinstance(value, (list, tuple)) or len(value) != 2
            or not isinstance(value[0], str)):
        raise ConfigError(f"{name}.{key} must be [kind, ratio]")
    return (value[0], float(value[1]))


@dataclass
class DatasetSpec:
    path: str | None = None
    synthetic: dict = field(default_factory=dict)

    @classmethod
    def from_section(cls, section: dict) -> "DatasetSpec":
        _only_keys(section, ("path", "synthetic"), "dataset")
        path = section.get("path")
        synthetic = _expect_mapping(section.get("synthetic"), "dataset.synthetic")
        if (path is None) == (not synthetic):
            raise ConfigError("dataset needs exactly one of 'path' or 'synthetic'")
        if synthetic:
            allowed = ("kind", "num_classes", "nodes_per_class", "graphs_per_class",
                       "min_nodes", "max_nodes", "feature_dim", "p_intra", "p_inter",
                       "class_sep", "noise", "density_step", "seed", "name",
                       "num_targets", "num_graphs", "edge_p", "edge_label_mode")
            _only_keys(synthetic, allowed, "dataset.synthetic")
            _choice_field(synthetic, "kind", None, "dataset.synthetic",
                          ("node", "edge", "graph", "link", "regression"))
        return cls(path=path, synthetic=synthetic)


@dataclass
class TaskSpec:
    level: str = "node"
    shots: int = 100
    query_per_class: int = 50
    hops: int = 2
    max_nodes: int = 100
    negatives_train: int = 1
    negatives_test: int = 100

    @classmethod
    def from_section(cls, section: dict) -> "TaskSpec":
        allowed = ("level", "shots", "query_per_class", "hops", "max_nodes",
                   "negatives_train", "negatives_test")
        _only_keys(section, allowed, "task")
        return cls(
            level=_choice_field(section, "level", "node", "task", TASK_LEVELS),
            shots=_int_field(section, "shots", 100, "task", minimum=1),
            query_per_class=_int_field(section, "query_per_class", 50, "task", minimum=1),
            hops=_int_field(section, "hops", 2, "task", minimum=1),
            max_nodes=_int_field(section, "max_nodes", 100, "task", minimum=2),
            negatives_train=_int_field(section, "negatives_train", 1, "task", minimum=0),
            negatives_test=_int_field(section, "negatives_test", 100, "task", minimum=1),
        )


@dataclass
class BackboneSpec:
    hidden_dim: int = 100
    depth: int = 2
    activation: str = "relu"
    readout: str = "mean"

    @classmethod
    def from_section(cls, section: dict) -> "BackboneSpec":
        _only_keys(section, ("hidden_dim", "depth", "activation", "readout"), "backbone")
        return cls(
            hidden_dim=_int_field(section, "hidden_dim", 100, "backbone", minimum=1),
            depth=_int_field(section, "depth", 2, "backbone", minimum=1),
            activation=_choice_field(section, "activation", "relu", "backbone",
                                     ("relu", "tanh", "identity")),
            readout=_choice_field(section, "readout", "mean", "backbone",
                                  ("mean", "sum")),
        )


def pretrain_config_from(section: dict) -> PretrainConfig:
    allowed = ("objective", "epochs", "batch_size", "temperature", "learning_rate",
               "aug_1", "aug_2", "perturb_scale", "seed")
    _only_keys(section, allowed, "pretrain")
    return PretrainConfig(
        objective=_choice_field(section, "objective", "graphcl", "pretrain", OBJECTIVES),
        epochs=_int_field(section, "epochs", 50, "pretrain", minimum=0),
        batch_size=_int_field(section, "batch_size", 32, "pretrain", minimum=2),
        temperature=_float_field(section, "temperature", 0.5, "pretrain", positive=True),
        learning_rate=_float_field(section, "learning_rate", 1e-3, "pretrain",
                                   positive=True),
        aug_1=_aug_pair(section, "aug_1", ("drop_edges", 0.2), "pretrain"),
        aug_2=_aug_pair(section, "aug_2", ("mask_features", 0.2), "pretrain"),
        perturb_scale=_float_field(section, "perturb_scale", 1.0, "pretrain"),
        seed=_int_field(section, "seed", 0, "pretrain"),
    )


@dataclass
class PromptSpec:
    num_tokens: int = 10
    structure_mode: str = "learnable"
    insert_mode: str = "weighted_feature_add"
    delta: float = 0.5

    @classmethod
    def from_section(cls, section: dict) -> "PromptSpec":
        _only_keys(section, ("num_tokens", "structure_mode", "insert_mode", "delta"),
                   "prompt")
        delta = _float_field(section, "delta", 0.5, "prompt")
        if not 0.0 < delta < 1.0:
            raise ConfigError("prompt.delta must lie strictly inside (0, 1)")
        return cls(
            num_tokens=_int_field(section, "num_tokens", 10, "prompt", minimum=1),
            structure_mode=_choice_field(section, "structure_mode", "learnable",
                                         "prompt", STRUCTURE_MODES),
            insert_mode=_choice_field(section, "insert_mode", "weighted_feature_add",
                                      "prompt", INSERT_MODES),
            delta=delta,
        )


def tune_config_from(section: dict) -> TuneConfig:
    _only_keys(section, ("steps", "learning_rate", "seed"), "tune")
    return TuneConfig(
        steps=_int_field(section, "steps", 200, "tune", minimum=0),
        learning_rate=_float_field(section, "learning_rate", 0.01, "tune",
                                   positive=True),
        seed=_int_field(section, "seed", 0, "tune"),
    )


def meta_config_from(section: dict) -> MetaConfig:
    allowed = ("inner_steps", "inner_lr", "outer_lr", "meta_batch", "outer_steps",
               "first_order", "seed", "train_tasks", "holdout_tasks",
               "task_shots", "task_query")
    _only_keys(section, allowed, "meta")
    first_order = section.get("first_order", True)
    if not isinstance(first_order, bool):
        raise ConfigError("meta.first_order must be a boolean")
    return MetaConfig(
        inner_steps=_int_field(section, "inner_steps", 5, "meta", minimum=0),
        inner_lr=_float_field(section, "inner_lr", 0.01, "meta", positive=True),
        outer_lr=_float_field(section, "outer_lr", 0.001, "meta", positive=True),
        meta_batch=_int_field(section, "meta_batch", 4, "meta", minimum=1),
        outer_steps=_int_field(section, "outer_steps", 100, "meta", minimum=0),
        first_order=first_order,
        seed=_int_field(section, "seed", 0, "meta"),
    )


@dataclass
class MetaTaskSpec:
    """How meta-training tasks are carved out of the task dataset."""
    train_tasks: int = 40
    holdout_tasks: int = 20
    task_shots: int = 5
    task_query: int = 5

    @classmethod
    def from_section(cls, section: dict) -> "MetaTaskSpec":
        return cls(
            train_tasks=_int_field(section, "train_tasks", 40, "meta", minimum=1),
            holdout_tasks=_int_field(section, "holdout_tasks", 20, "meta", minimum=0),
            task_shots=_int_field(section, "task_shots", 5, "meta", minimum=1),
            task_query=_int_field(section, "task_query", 5, "meta", minimum=1),
        )


@dataclass
class ErrorLabSpec:
    num_graphs: int = 50
    min_nodes: int = 20
    max_nodes: int = 50
    feature_dim: int = 8
    class_sep: float = 0.5
    noise: float = 1.5
    token_counts: list = field(default_factory=lambda: [3, 5, 10])
    transformations: list = field(default_factory=lambda: [
        ("drop_nodes", 0.2), ("drop_edges", 0.2), ("mask_features", 0.2)])
    steps: int = 300
    learning_rate: float = 0.05
    seed: int = 0

    @classmethod
    def from_section(cls, section: dict) -> "ErrorLabSpec":
        allowed = ("num_graphs", "min_nodes", "max_nodes", "feature_dim",
                   "class_sep", "noise", "token_counts", "transformations",
                   "steps", "learning_rate", "seed")
        _only_keys(section, allowed, "errorlab")
        spec = cls(
            num_graphs=_int_field(section, "num_graphs", 50, "errorlab", minimum=1),
            min_nodes=_int_field(section, "min_nodes", 20, "errorlab", minimum=2),
            max_nodes=_int_field(section, "max_nodes", 50, "errorlab", minimum=2),
            feature_dim=_int_field(section, "feature_dim", 8, "errorlab", minimum=1),
            class_sep=_float_field(section, "class_sep", 0.5, "errorlab"),
            noise=_float_field(section, "noise", 1.5, "errorlab"),
            steps=_int_field(section, "steps", 300, "errorlab", minimum=0),
            learning_rate=_float_field(section, "learning_rate", 0.05, "errorlab",
                                       positive=True),
            seed=_int_field(section, "seed", 0, "errorlab"),
        )
        if "token_counts" in section:
            counts = section["token_counts"]
            if (not isinstance(counts, list) or not counts
                    or not all(isinstance(c, int) and c >= 1 for c in counts)):
                raise ConfigError("errorlab.token_counts must be positive integers")
            spec.token_counts = list(counts)
        if "transformations" in section:
            spec.transformations = [
                _aug_pair({"t": t}, "t", None, "errorlab.transformations")
                for t in section["transformations"]
            ]
        return spec


@dataclass
class TransferSpec:
    source_level: str = "graph"
    target_level: str = "edge"
    schemes: list = field(default_factory=lambda: list(TRANSFER_SCHEMES))
    source: dict = field(default_factory=dict)  # DatasetSpec section for the source

    @classmethod
    def from_section(cls, section: dict) -> "TransferSpec":
        _only_keys(section, ("source_level", "target_level", "schemes", "source"),
                   "transfer")
        schemes = section.get("schemes", list(TRANSFER_SCHEMES))
        if not isinstance(schemes, list) or not schemes:
            raise ConfigError("transfer.schemes must be a non-empty list")
        for s in schemes:
            if s not in TRANSFER_SCHEMES:
                raise ConfigError(
                    f"transfer.schemes entries must be from {', '.join(TRANSFER_SCHEMES)}")
        return cls(
            source_level=_choice_field(section, "source_level", "graph", "transfer",
                                       ("node", "edge", "graph")),
            target_level=_choice_field(section, "target_level", "edge", "transfer",
                                       ("node", "edge", "graph")),
            schemes=list(schemes),
            source=_expect_mapping(section.get("source"), "transfer.source"),
        )


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec
    task: TaskSpec
    backbone: BackboneSpec
    pretrain: PretrainConfig
    prompt: PromptSpec
    tune: TuneConfig
    meta: MetaConfig
    meta_tasks: MetaTaskSpec
    scheme: str = "prompt"
    seeds: list = field(default_factory=lambda: [0])
    out_dir: str | None = None
    transfer: TransferSpec | None = None
    errorlab: ErrorLabSpec | None = None
    raw: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown training scheme {self.scheme!r}")
        if not self.seeds:
            raise ConfigError("eval.seeds must be non-empty")


def experiment_config_from(document: dict) -> ExperimentConfig:
    document = _expect_mapping(document, "config")
    _only_keys(document, TOP_LEVEL_SECTIONS, "config")
    eval_section = _expect_mapping(document.get("eval"), "eval")
    _only_keys(eval_section, ("scheme", "seeds"), "eval")
    seeds = eval_section.get("seeds", [0])
    if (not isinstance(seeds, list) or not seeds
            or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds)):
        raise ConfigError("eval.seeds must be a non-empty list of integers")
    scheme = _choice_field(eval_section, "scheme", "prompt", "eval", SCHEMES)
    meta_section = _expect_mapping(document.get("meta"), "meta")
    out_dir = document.get("out_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError("out_dir must be a string path")
    config = ExperimentConfig(
        dataset=DatasetSpec.from_section(_expect_mapping(document.get("dataset"),
                                                         "dataset")),
        task=TaskSpec.from_section(_expect_mapping(document.get("task"), "task")),
        backbone=BackboneSpec.from_section(_expect_mapping(document.get("backbone"),
                                                           "backbone")),
        pretrain=pretrain_config_from(_expect_mapping(document.get("pretrain"),
                                                      "pretrain")),
        prompt=PromptSpec.from_section(_expect_mapping(document.get("prompt"),
                                                       "prompt")),
        tune=tune_config_from(_expect_mapping(document.get("tune"), "tune")),
        meta=meta_config_from(meta_section),
        meta_tasks=MetaTaskSpec.from_section(meta_section),
        scheme=scheme,
        seeds=list(seeds),
        out_dir=out_dir,
        transfer=(TransferSpec.from_section(_expect_mapping(document["transfer"],
                                                            "transfer"))
                  if "transfer" in document else None),
        errorlab=(ErrorLabSpec.from_section(_expect_mapping(document["errorlab"],
                                                            "errorlab"))
                  if "errorlab" in document else None),
        raw=document,
    )
    config.validate()
    return config


def load_config_document(path: str) -> dict:
    """Parse a YAML or JSON config file into a plain mapping."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        if path.endswith(".json"):
            document = json.loads(text)
        else:
            document = yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
    if document is None:
        document = {}
    if not isinstance(document, dict):
        raise ConfigError(f"config file {path} must contain a mapping")
    return document


def load_config(path: str) -> ExperimentConfig:
    return experiment_config_from(load_config_document(path))
