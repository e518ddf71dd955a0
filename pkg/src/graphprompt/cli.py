"""Command-line interface.

Subcommands: pretrain, tune, meta-train, eval, transfer, error-bound,
report. All take `--config PATH --seed INT --out DIR --threads INT`.
Exit codes: 0 success, 2 configuration problems, 3 numeric failures.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import torch

from . import backbone as backbone_mod
from . import prompt as prompt_mod
from .config import ExperimentConfig, load_config
from .data import SynthSpec, synthesize_dataset
from .errorlab import NAIVE_ROW, NO_PROMPT_ROW, error_reduction_table
from .errors import (CheckpointError, ConfigError, ContractError,
                     DomainTransferError, NumericError, SchemaError,
                     UndefinedMetricError, ValidationError)
from .experiments import (_Engine, report_from_json_obj, render_report,
                          run_experiment, transfer_experiment)
from .meta import meta_train
from .prompt import TuneConfig, tune_prompt
from .seeding import child_rng, child_seed
from .tasks import episode_manifest, sample_few_shot


def _require_config(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("this command needs --config PATH")
    return load_config(args.config)


def _out_dir(args, config: ExperimentConfig | None = None) -> str:
    out = args.out or (config.out_dir if config else None) or "out"
    os.makedirs(out, exist_ok=True)
    return out


def _master_seed(args, config: ExperimentConfig) -> int:
    return args.seed if args.seed is not None else config.seeds[0]


def cmd_pretrain(args) -> int:
    from .pretrain import pretrain

    config = _require_config(args)
    out = _out_dir(args, config)
    seed = _master_seed(args, config)
    engine = _Engine(config)
    corpus = engine.tds if engine.tds is not None else engine.dataset
    model = engine.fresh_backbone(seed)
    pcfg = replace(config.pretrain, seed=child_seed(seed, 3))
    _, trace = pretrain(corpus, model, pcfg,
                        log_file=os.path.join(out, "pretrain_log.jsonl"))
    path = os.path.join(out, "backbone.ckpt")
    backbone_mod.checkpoint_save(model, path)
    if trace:
        from .plotting import loss_curve
        loss_curve(trace, os.path.join(out, "fig_pretrain_loss.png"),
                   title=f"{pcfg.objective} pre-training", ylabel="mean NT-Xent loss",
                   xlabel="epoch")
        print(f"pretrain: {len(trace)} epochs, final mean loss {trace[-1]:.4f}")
    print(f"backbone checkpoint: {path}")
    return 0


def cmd_tune(args) -> int:
    config = _require_config(args)
    out = _out_dir(args, config)
    seed = _master_seed(args, config)
    engine = _Engine(config)
    task = engine.seed_task(seed)
    model = engine.pretrained_backbone(seed)
    model.freeze()
    prompt = engine._init_prompt(seed)
    head = engine._head(seed)
    tune_cfg = TuneConfig(steps=config.tune.steps,
                          learning_rate=config.tune.learning_rate,
                          seed=child_seed(seed, 29))
    prompt, head, trace = tune_prompt(prompt, head, [engine._tuning_episode(task)],
                                      model, tune_cfg)
    prompt_path = os.path.join(out, "prompt.ckpt")
    prompt_mod.checkpoint_save(prompt, prompt_path, head)
    backbone_mod.checkpoint_save(model, os.path.join(out, "backbone.ckpt"))
    if engine.level != "link":
        with open(os.path.join(out, "episode.json"), "w", encoding="utf-8") as fh:
            fh.write(episode_manifest(task.episode) + "\n")
    if trace:
        from .plotting import loss_curve
        loss_curve(trace, os.path.join(out, "fig_tune_loss.png"),
                   title="prompt tuning", ylabel="support loss")
    metrics = engine.evaluate(model, head, task, prompt)
    print("tune: " + " ".join(f"{k}={v:.4f}" for k, v in sorted(metrics.items())))
    print(f"prompt checkpoint: {prompt_path}")
    return 0


def cmd_meta_train(args) -> int:
    config = _require_config(args)
    out = _out_dir(args, config)
    seed = _master_seed(args, config)
    engine = _Engine(config)
    if engine.level not in ("node", "edge", "graph"):
        raise ConfigError("meta-train supports node/edge/graph levels only")
    rng = child_rng(seed, 41)
    mt = config.meta_tasks
    episodes = [sample_few_shot(engine.tds, mt.task_shots, mt.task_query, rng)
                for _ in range(mt.train_tasks)]
    model = engine.pretrained_backbone(seed)
    model.freeze()
    prompt = engine._init_prompt(seed)
    head = engine._head(seed)
    mcfg = replace(config.meta, seed=child_seed(seed, 31))
    prompt, head, trace = meta_train(prompt, head, episodes, model, mcfg,
                                     log_file=os.path.join(out, "meta_log.jsonl"))
    path = os.path.join(out, "meta_prompt.ckpt")
    prompt_mod.checkpoint_save(prompt, path, head)
    backbone_mod.checkpoint_save(model, os.path.join(out, "backbone.ckpt"))
    if trace:
        from .plotting import loss_curve
        loss_curve(trace, os.path.join(out, "fig_meta_loss.png"),
                   title="meta-training", ylabel="mean query loss",
                   xlabel="outer step")
        print(f"meta-train: {len(trace)} outer steps, "
              f"final mean query loss {trace[-1]:.4f}")
    print(f"meta prompt checkpoint: {path}")
    return 0


def _print_report(report) -> None:
    for s in report.summary:
        if not s["mean"]:
            print(f"{s['scheme']}: no successful seeds")
            continue
        cells = " ".join(f"{m}={s['mean'][m]:.4f}±{s['std'][m]:.4f}"
                         for m in report.metric_keys)
        print(f"{s['scheme']}: {cells} ({s['seed_count']} seeds)")
    if report.imp_percent:
        cells = " ".join(f"{m}={v:.4f}" for m, v in sorted(report.imp_percent.items()))
        print(f"IMP: {cells}")
    for f in report.failures:
        print(f"failure: scheme {f['scheme']} seed {f['seed']}: {f['error']}",
              file=sys.stderr)


def cmd_eval(args) -> int:
    config = _require_config(args)
    if args.seed is not None:
        config.seeds = [args.seed]
    config.out_dir = _out_dir(args, config)
    report = run_experiment(config)
    _print_report(report)
    print(f"report: {os.path.join(config.out_dir, 'report.json')}")
    return 3 if report.failures else 0


def cmd_transfer(args) -> int:
    config = _require_config(args)
    if config.transfer is None:
        raise ConfigError("config has no transfer section")
    if args.seed is not None:
        config.seeds = [args.seed]
    config.out_dir = _out_dir(args, config)
    report = transfer_experiment(config)
    _print_report(report)
    print(f"report: {os.path.join(config.out_dir, 'report.json')}")
    return 3 if report.failures else 0


def cmd_error_bound(args) -> int:
    from .config import ErrorLabSpec
    from .pretrain import pretrain

    config = _require_config(args)
    spec = config.errorlab or ErrorLabSpec()
    out = _out_dir(args, config)
    seed = args.seed if args.seed is not None else spec.seed
    per_class = (spec.num_graphs + 1) // 2
    corpus = synthesize_dataset(
        SynthSpec(num_classes=2, graphs_per_class=per_class,
                  min_nodes=spec.min_nodes, max_nodes=spec.max_nodes,
                  feature_dim=spec.feature_dim, class_sep=spec.class_sep,
                  noise=spec.noise),
        child_rng(seed, 101))
    graphs = corpus.graphs[:spec.num_graphs]
    model = backbone_mod.init_backbone(
        spec.feature_dim, hidden_dim=config.backbone.hidden_dim,
        depth=config.backbone.depth, activation=config.backbone.activation,
        readout=config.backbone.readout, rng=child_rng(seed, 17))
    pcfg = replace(config.pretrain, seed=child_seed(seed, 3))
    pretrain(corpus, model, pcfg)
    model.freeze()
    transformations = [(kind, ratio, child_seed(seed, 7, i))
                       for i, (kind, ratio) in enumerate(spec.transformations)]
    table = error_reduction_table(
        model, graphs, spec.token_counts, transformations,
        TuneConfig(steps=spec.steps, learning_rate=spec.learning_rate,
                   seed=child_seed(seed, 29)))
    table.save(out)
    from .plotting import error_trend, grouped_bars
    reds = [table.row(f"prompt_graph_{k}")[1] for k in spec.token_counts]
    error_trend(spec.token_counts, reds, os.path.join(out, "fig_red_trend.png"))
    kinds = [t[0] for t in transformations]
    series = {name: [cells[k].final_error for k in kinds]
              for name, cells, _ in table.rows}
    grouped_bars(kinds, series, os.path.join(out, "fig_errors.png"),
                 title="imitation error by transformation", ylabel="mean L2 error")
    for name, _, red in table.rows:
        label = "-" if name == NO_PROMPT_ROW else f"{red:.2f}%"
        print(f"{name}: RED {label}")
    print(f"error table: {os.path.join(out, 'error_table.json')}")
    return 0


def cmd_report(args) -> int:
    path = args.report_json
    if not os.path.exists(path):
        raise ConfigError(f"report file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"cannot parse report JSON {path}: {exc}") from exc
    report = report_from_json_obj(obj)
    out = args.out or os.path.dirname(os.path.abspath(path))
    paths = render_report(report, out)
    _print_report(report)
    print("rendered: " + " ".join(sorted(os.path.basename(p)
                                         for p in paths.values())))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphprompt",
        description="Prompt tuning for frozen graph encoders")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = [
        ("pretrain", cmd_pretrain, "contrastively pre-train a backbone"),
        ("tune", cmd_tune, "tune a prompt on a frozen backbone"),
        ("meta-train", cmd_meta_train, "meta-learn a prompt initialization"),
        ("eval", cmd_eval, "run the configured training scheme end to end"),
        ("transfer", cmd_transfer, "evaluate hard/fine-tune/prompt transfer"),
        ("error-bound", cmd_error_bound, "reproduce the error-reduction table"),
        ("report", cmd_report, "re-render report files from report.json"),
    ]
    for name, fn, help_text in commands:
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", default=None, help="YAML or JSON config file")
        sp.add_argument("--seed", type=int, default=None, help="master seed override")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--threads", type=int, default=1,
                        help="torch thread count (default 1 for determinism)")
        if name == "report":
            sp.add_argument("report_json", nargs="?", default="report.json",
                            help="path to an existing report.json")
        sp.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    torch.set_num_threads(max(1, args.threads))
    try:
        return args.func(args)
    except (ConfigError, SchemaError, ValidationError, UndefinedMetricError,
            CheckpointError, DomainTransferError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, ContractError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
