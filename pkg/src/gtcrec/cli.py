"""Command-line front end: synth, train, evaluate, ablate, sweep.

Every command writes a self-describing timestamped run directory under
./runs (or $GTC_RUNS_DIR). Exit codes: 0 success, 1 usage/config error,
2 runtime or numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import DEFAULT_SPLIT, TrainConfig, format_config, parse_config
from .data import (
    TEST,
    SyntheticGroundTruth,
    build_normalized_adjacency,
    core_filter,
    generate_synthetic,
    load_content_features,
    load_interactions,
    split_dataset,
    write_feature_matrix,
    write_ground_truth,
    write_interactions,
)
from .diffusion import make_schedule
from .encoder import to_torch_sparse
from .errors import ConfigError, GTCError
from .harness import DEFAULT_GRIDS, run_ablation, run_sweep, write_results
from .plots import render_balance_figure, render_consistency_figure, render_sweep_figure
from .runs import create_run_dir, write_metrics_log, write_two_column
from .seeding import derived_seed
from .trainer import build_model, evaluate_model, train, variant_spec

DEFAULT_ABLATION = "full,base,base+dn,base+tc,wo-tc"


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this front end reserves 2 for runtime."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE", help="key = value config file")
    for f in dataclasses.fields(TrainConfig):
        flag = "--" + f.name.replace("_", "-")
        parser.add_argument(flag, dest=f.name, metavar="VALUE", default=None)


def _resolve_config(args) -> TrainConfig:
    overrides = {
        f.name: getattr(args, f.name)
        for f in dataclasses.fields(TrainConfig)
        if getattr(args, f.name, None) is not None
    }
    return parse_config(getattr(args, "config", None), overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gtcrec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_synth = sub.add_parser("synth", help="generate a planted synthetic dataset")
    _add_config_flags(p_synth)
    p_synth.add_argument("--n-users", type=int, default=500)
    p_synth.add_argument("--n-items", type=int, default=300)
    p_synth.add_argument("--n-groups", type=int, default=2)
    p_synth.set_defaults(func=cmd_synth)

    p_train = sub.add_parser("train", help="train one variant and evaluate it")
    _add_config_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("evaluate", help="re-evaluate a run directory's checkpoint")
    _add_config_flags(p_eval)
    p_eval.add_argument("--run", required=True, metavar="DIR", help="existing run directory")
    p_eval.set_defaults(func=cmd_evaluate)

    p_ablate = sub.add_parser("ablate", help="train several variants across seeds")
    _add_config_flags(p_ablate)
    p_ablate.add_argument("--variants", default=DEFAULT_ABLATION, metavar="TAGS")
    p_ablate.set_defaults(func=cmd_ablate)

    p_sweep = sub.add_parser("sweep", help="grid-sweep one hyperparameter")
    _add_config_flags(p_sweep)
    p_sweep.add_argument("--param", default="omega2", metavar="NAME")
    p_sweep.add_argument("--grid", default=None, metavar="V1,V2,...")
    p_sweep.set_defaults(func=cmd_sweep)

    return parser


def _load_inputs(config: TrainConfig):
    """Dataset (split) + features as the given config describes them."""
    spec = variant_spec(config.variant)
    if config.interactions is None:
        raise ConfigError("no interaction file given (set `interactions`)")
    ds = load_interactions(config.interactions, config.k_core)
    ds = split_dataset(ds, DEFAULT_SPLIT, derived_seed(config.seed, "split"))
    features = None
    if spec.content:
        if config.visual is None or config.textual is None:
            raise ConfigError(f"variant {spec.tag!r} needs `visual` and `textual` feature files")
        features = load_content_features(config.visual, config.textual, ds.n_items)
    return ds, features


def _test_metrics(config, ds, features, model):
    adj = to_torch_sparse(build_normalized_adjacency(ds))
    sched = make_schedule(config.T, config.beta_start, config.beta_end)
    metrics, _ = evaluate_model(model, adj, features, ds, config, sched, split=TEST)
    return metrics


def _metrics_rows(label: str, metrics, k_list):
    return [
        (label, metric, k, metrics[(metric, k)], 0.0, 1)
        for metric in ("ndcg", "recall", "map")
        for k in k_list
    ]


def _write_trace_artifacts(run_dir, trace) -> None:
    write_metrics_log(run_dir / "metrics.csv", trace)
    epochs = [row["epoch"] for row in trace]
    balance = [row["balance"] for row in trace]
    write_two_column(run_dir / "balance.dat", epochs, balance, "epoch", "balance_score")
    dots = {}
    for name in ("inter", "visual", "textual"):
        series = [row[f"dot_{name}"] for row in trace]
        if not all(np.isnan(series)):
            dots[name] = series
            write_two_column(
                run_dir / f"consistency_{name}.dat", epochs, series, "epoch", f"dot_{name}"
            )
    if epochs:
        render_balance_figure(epochs, balance, run_dir / "balance.png")
        if dots:
            render_consistency_figure(epochs, dots, run_dir / "consistency.png")


def cmd_synth(args) -> int:
    config = _resolve_config(args)
    ds, features, truth = generate_synthetic(
        args.n_users, args.n_items, n_user_groups=args.n_groups, seed=config.seed
    )
    # pre-shrink to the k-core so the written artifacts reload unchanged
    ds, kept_users, kept_items = core_filter(ds, config.k_core)
    features = dataclasses.replace(
        features,
        visual=features.visual[kept_items],
        textual=features.textual[kept_items],
    )
    truth = SyntheticGroundTruth(
        groups=truth.groups[kept_users],
        group_modality=truth.group_modality,
        preferences=truth.preferences[kept_users],
        visual_attributes=truth.visual_attributes[kept_items],
        textual_attributes=truth.textual_attributes[kept_items],
    )
    run_dir = create_run_dir("synth")
    write_interactions(run_dir / "interactions.tsv", ds)
    write_feature_matrix(run_dir / "visual.gtcmat", features.visual)
    write_feature_matrix(run_dir / "textual.gtcmat", features.textual)
    write_ground_truth(run_dir / "ground_truth.txt", truth)
    (run_dir / "config.txt").write_text(format_config(config), encoding="utf-8")
    print(f"synthetic dataset: {ds.n_users} users, {ds.n_items} items, "
          f"{ds.n_interactions} interactions")
    print(run_dir)
    return 0


def cmd_train(args) -> int:
    config = _resolve_config(args)
    ds, features = _load_inputs(config)
    result = train(config, ds, features)
    metrics = _test_metrics(config, ds, features, result.model)
    run_dir = create_run_dir(f"train-{config.variant}")
    (run_dir / "config.txt").write_text(format_config(config), encoding="utf-8")
    save_checkpoint(run_dir / "checkpoint.gtc", result.model.state_dict())
    _write_trace_artifacts(run_dir, result.trace)
    write_results(run_dir / "results.csv", _metrics_rows(config.variant, metrics, config.k_list))
    k = 10 if 10 in config.k_list else config.k_list[0]
    print(f"best epoch {result.best_epoch}, test ndcg@{k} = {metrics[('ndcg', k)]:.4f}")
    print(run_dir)
    return 0


def cmd_evaluate(args) -> int:
    run_path = args.run
    overrides = {
        f.name: getattr(args, f.name)
        for f in dataclasses.fields(TrainConfig)
        if getattr(args, f.name, None) is not None
    }
    config = parse_config(f"{run_path}/config.txt", overrides)
    ds, features = _load_inputs(config)
    model = build_model(config, ds, features)
    model.load_state_dict(load_checkpoint(f"{run_path}/checkpoint.gtc"))
    metrics = _test_metrics(config, ds, features, model)
    run_dir = create_run_dir(f"evaluate-{config.variant}")
    (run_dir / "config.txt").write_text(format_config(config), encoding="utf-8")
    write_results(run_dir / "results.csv", _metrics_rows(config.variant, metrics, config.k_list))
    k = 10 if 10 in config.k_list else config.k_list[0]
    print(f"test ndcg@{k} = {metrics[('ndcg', k)]:.4f}")
    print(run_dir)
    return 0


def cmd_ablate(args) -> int:
    config = _resolve_config(args)
    variants = tuple(tag.strip() for tag in args.variants.split(",") if tag.strip())
    ds, features = _load_inputs(dataclasses.replace(config, variant="full"))
    rows, detail = run_ablation(config, variants, ds, features)
    run_dir = create_run_dir("ablate")
    (run_dir / "config.txt").write_text(format_config(config), encoding="utf-8")
    write_results(run_dir / "results.csv", rows)
    logs = run_dir / "logs"
    logs.mkdir()
    for tag, outcomes in detail.items():
        for outcome in outcomes:
            name = f"{tag}-seed{outcome.config.seed}.csv".replace("+", "_")
            write_metrics_log(logs / name, outcome.result.trace)
    for variant, metric, k, mean, std, n in rows:
        if metric == "ndcg" and k == (10 if 10 in config.k_list else config.k_list[0]):
            print(f"{variant}: ndcg@{k} = {mean:.4f} +- {std:.4f} ({n} seeds)")
    print(run_dir)
    return 0


def cmd_sweep(args) -> int:
    config = _resolve_config(args)
    param = args.param
    if args.grid:
        tokens = [tok for tok in args.grid.replace(",", " ").split() if tok]
        grid = tuple(int(tok) if param == "T" else float(tok) for tok in tokens)
    else:
        grid = DEFAULT_GRIDS.get(param)
        if grid is None:
            raise ConfigError(f"no default grid for {param!r}; pass --grid")
    ds, features = _load_inputs(config)
    rows, _ = run_sweep(config, param, grid, ds, features)
    run_dir = create_run_dir(f"sweep-{param}")
    (run_dir / "config.txt").write_text(format_config(config), encoding="utf-8")
    write_results(run_dir / "results.csv", rows)
    k = 10 if 10 in config.k_list else config.k_list[0]
    means = {}
    stds = {}
    for variant, metric, kk, mean, std, _n in rows:
        if metric == "ndcg" and kk == k:
            value = float(variant.split("=", 1)[1])
            means[value] = mean
            stds[value] = std
    values = sorted(means)
    write_two_column(
        run_dir / "sweep.dat", values, [means[v] for v in values], param, f"ndcg@{k}"
    )
    render_sweep_figure(
        values, [means[v] for v in values], [stds[v] for v in values],
        param, f"ndcg@{k}", run_dir / "sweep.png",
    )
    print(run_dir)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"gtcrec: error: {err}", file=sys.stderr)
        return 1
    except (GTCError, OSError) as err:
        print(f"gtcrec: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
