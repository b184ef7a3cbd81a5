"""Multi-seed experiment drivers: ablation grids and hyperparameter sweeps."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .config import TrainConfig
from .data import TEST, ContentFeatures, InteractionDataset, build_normalized_adjacency
from .diffusion import make_schedule
from .encoder import to_torch_sparse
from .errors import ConfigError, DataError
from .evaluation import METRIC_NAMES
from .trainer import TrainResult, evaluate_model, train, variant_spec

SWEEP_PARAMS = ("omega1", "omega2", "T")

DEFAULT_GRIDS = {
    "omega1": tuple(round(0.1 * i, 1) for i in range(1, 11)),
    "omega2": tuple(round(0.1 * i, 1) for i in range(1, 11)),
    "T": tuple(range(100, 1001, 100)),
}


@dataclass
class RunOutcome:
    """One trained seed: test metrics of the best-validation state plus trace."""

    config: TrainConfig
    test_metrics: dict[tuple[str, int], float]
    result: TrainResult


def run_single(
    config: TrainConfig, ds: InteractionDataset, features: ContentFeatures | None
) -> RunOutcome:
    result = train(config, ds, features)
    adj = to_torch_sparse(build_normalized_adjacency(ds))
    sched = make_schedule(config.T, config.beta_start, config.beta_end)
    metrics, _ = evaluate_model(
        result.model, adj, features, ds, config, sched, split=TEST
    )
    return RunOutcome(config=config, test_metrics=metrics, result=result)


def _aggregate(label: str, outcomes: list[RunOutcome], k_list) -> list[tuple]:
    rows = []
    for metric in METRIC_NAMES:
        for k in k_list:
            values = np.array([o.test_metrics[(metric, k)] for o in outcomes])
            rows.append(
                (label, metric, k, float(values.mean()), float(values.std()), len(values))
            )
    return rows


def run_ablation(
    config: TrainConfig,
    variants: tuple[str, ...],
    ds: InteractionDataset,
    features: ContentFeatures | None,
) -> tuple[list[tuple], dict[str, list[RunOutcome]]]:
    """Train every (variant, seed) pair under otherwise identical config.

    Returns (aggregated table rows, per-variant outcome lists). Row format
    matches the results file: (variant, metric, K, mean, std, n_seeds).
    """
    if not variants:
        raise ConfigError("no variants requested")
    for tag in variants:
        variant_spec(tag)
    table: list[tuple] = []
    detail: dict[str, list[RunOutcome]] = {}
    for tag in variants:
        outcomes = []
        for offset in range(config.n_seeds):
            run_cfg = dataclasses.replace(
                config, variant=tag, seed=config.seed + offset
            ).validate()
            outcomes.append(run_single(run_cfg, ds, features))
        detail[tag] = outcomes
        table.extend(_aggregate(tag, outcomes, config.k_list))
    return table, detail


def run_sweep(
    config: TrainConfig,
    param: str,
    grid: tuple,
    ds: InteractionDataset,
    features: ContentFeatures | None,
) -> tuple[list[tuple], dict[str, list[RunOutcome]]]:
    """Re-train across one hyperparameter grid; rows labeled `param=value`."""
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"sweep param must be one of {SWEEP_PARAMS}, got {param!r}")
    if not grid:
        raise ConfigError("sweep grid is empty")
    table: list[tuple] = []
    detail: dict[str, list[RunOutcome]] = {}
    for value in grid:
        label = f"{param}={value}"
        outcomes = []
        for offset in range(config.n_seeds):
            run_cfg = dataclasses.replace(
                config, seed=config.seed + offset, **{param: value}
            ).validate()
            outcomes.append(run_single(run_cfg, ds, features))
        detail[label] = outcomes
        table.extend(_aggregate(label, outcomes, config.k_list))
    return table, detail


def write_results(path, rows) -> None:
    """Comma-separated results table: variant,metric,K,mean,std,n_seeds."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("variant,metric,K,mean,std,n_seeds\n")
        for variant, metric, k, mean, std, n in rows:
            fh.write(f"{variant},{metric},{k},{mean!r},{std!r},{n}\n")


def read_results(path) -> list[tuple]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "variant,metric,K,mean,std,n_seeds":
            raise DataError(f"unexpected results header: {header!r}")
        for line in fh:
            variant, metric, k, mean, std, n = line.strip().split(",")
            rows.append((variant, metric, int(k), float(mean), float(std), int(n)))
    return rows
