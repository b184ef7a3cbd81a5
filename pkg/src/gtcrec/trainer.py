"""Training loop and the ablation variant definitions.

Each variant toggles three switches: which content channels exist, whether
the denoiser refines them (adding the generation loss), and how modalities
are aligned and fused. During training the refined content is the one-shot
clean estimate from a random-timestep denoising pass (differentiable); at
evaluation time it is regenerated by the full reverse chain.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .config import TrainConfig
from .data import (
    VAL,
    ContentFeatures,
    InteractionDataset,
    build_normalized_adjacency,
    sample_bpr_triplets,
)
from .diffusion import DiffusionSchedule, make_schedule, noised_reconstruction, reverse_sample
from .encoder import to_torch_sparse
from .errors import ConfigError, NumericalError
from .evaluation import (
    consistency_dots,
    evaluate_table,
    modality_balance_score,
    test_user_ids,
)
from .fusion import LossWeights, bpr_loss, total_loss
from .model import GTCModel
from .seeding import numpy_rng, torch_generator
from .tc import TriModalBatch, pairwise_infonce, symmetrized_tc_loss, tc_lower_bound


@dataclass(frozen=True)
class VariantSpec:
    """One ablation build: channels, refinement, alignment, fusion style."""

    tag: str
    content: tuple[str, ...] = ("visual", "textual")
    denoise: bool = True
    alignment: str = "tc"  # "tc" | "pairwise" | "none"
    fusion: str = "gated"  # "gated" | "concat"


VARIANTS = {
    "full": VariantSpec("full"),
    "base": VariantSpec("base", denoise=False, alignment="none", fusion="concat"),
    "base+dn": VariantSpec("base+dn", alignment="none", fusion="concat"),
    "base+tc": VariantSpec("base+tc", denoise=False, fusion="concat"),
    "wo-tc": VariantSpec("wo-tc", alignment="pairwise"),
    "inter-only": VariantSpec("inter-only", content=(), denoise=False, alignment="none"),
    "wo-visual": VariantSpec("wo-visual", content=("textual",), alignment="pairwise"),
    "wo-textual": VariantSpec("wo-textual", content=("visual",), alignment="pairwise"),
}

TRACE_COLUMNS = (
    "epoch",
    "bpr",
    "gen",
    "con",
    "total",
    "tc_bound",
    "val_ndcg",
    "balance",
    "dot_inter",
    "dot_visual",
    "dot_textual",
)

N_CONSISTENCY_USERS = 100
GRAD_CLIP_NORM = 5.0


@dataclass
class TrainResult:
    model: GTCModel
    trace: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_ndcg: float = float("-inf")


def variant_spec(tag: str) -> VariantSpec:
    if tag not in VARIANTS:
        raise ConfigError(f"unknown variant {tag!r}; known: {sorted(VARIANTS)}")
    return VARIANTS[tag]


def build_model(config: TrainConfig, ds: InteractionDataset, features: ContentFeatures | None) -> GTCModel:
    spec = variant_spec(config.variant)
    dims = {}
    if features is not None:
        dims = {"visual": features.visual.shape[1], "textual": features.textual.shape[1]}
    return GTCModel(
        ds.n_users,
        ds.n_items,
        config.d,
        feature_dims=dims,
        seed=config.seed,
        n_layers=config.n_layers,
        content=spec.content,
        with_denoiser=spec.denoise,
        tau_init=config.tau_init,
    )


def _refine_training(
    model: GTCModel,
    tables: dict[str, torch.Tensor],
    sched: DiffusionSchedule,
    generator: torch.Generator,
    spec: VariantSpec,
) -> tuple[dict[str, torch.Tensor], torch.Tensor]:
    """(refined content tables, summed generation loss) for one step."""
    gen = torch.zeros(())
    if not spec.content:
        return {}, gen
    if not spec.denoise:
        return {m: tables[m] for m in spec.content}, gen
    refined = {}
    for m in spec.content:
        loss_m, x0_hat = noised_reconstruction(
            model.denoiser, tables[m], tables["inter"], sched, generator
        )
        gen = gen + loss_m
        refined[m] = x0_hat
    return refined, gen


def refine_eval(
    model: GTCModel,
    tables: dict[str, torch.Tensor],
    sched: DiffusionSchedule,
    seed: int,
    spec: VariantSpec,
) -> dict[str, torch.Tensor]:
    """Full reverse-chain generation with a fixed per-(seed, channel) stream."""
    if not spec.denoise:
        return {m: tables[m] for m in spec.content}
    return {
        m: reverse_sample(
            model.denoiser, tables["inter"], sched, torch_generator(seed, "eval", m)
        )
        for m in spec.content
    }


def _alignment_loss(
    tables: dict[str, torch.Tensor],
    refined: dict[str, torch.Tensor],
    spec: VariantSpec,
    n_users: int,
    perm_rng: np.random.Generator,
    content_batch: int,
) -> tuple[torch.Tensor, float]:
    """(contrastive loss, TC lower-bound readout) over a batch of item rows."""
    if spec.alignment == "none":
        return torch.zeros(()), float("nan")
    item_rows = {"inter": tables["inter"][n_users:]}
    item_rows.update({m: refined[m][n_users:] for m in spec.content})
    n_items = item_rows["inter"].shape[0]
    if n_items > content_batch:
        pick = torch.as_tensor(perm_rng.choice(n_items, size=content_batch, replace=False))
        item_rows = {name: rows[pick] for name, rows in item_rows.items()}
    if spec.alignment == "tc":
        batch = TriModalBatch(item_rows["inter"], item_rows["visual"], item_rows["textual"])
        con = symmetrized_tc_loss(batch, perm_rng)
        bound = tc_lower_bound(float(con.detach()) / 3.0, batch.n_rows)
        return con, bound
    names = list(item_rows)
    con = torch.zeros(())
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            con = con + pairwise_infonce(item_rows[names[i]], item_rows[names[j]])
    return con, float("nan")


def scoring_table(
    model: GTCModel,
    tables: dict[str, torch.Tensor],
    refined: dict[str, torch.Tensor],
    spec: VariantSpec,
) -> torch.Tensor:
    if spec.fusion == "concat":
        return model.concat_table({"inter": tables["inter"], **refined})
    return model.fuse(tables["inter"], refined).table


def _diagnostics(
    model: GTCModel,
    tables: dict[str, torch.Tensor],
    refined: dict[str, torch.Tensor],
    ds: InteractionDataset,
) -> dict[str, float]:
    """Balance score and user-consistency dot products on test users."""
    users = test_user_ids(ds)
    fused = model.fuse(tables["inter"], refined)
    channel_rows = {"inter": tables["inter"][users]}
    channel_rows.update({m: refined[m][users] for m in refined})
    out = {"balance": modality_balance_score(fused.table[users], channel_rows)}
    sample = users[:N_CONSISTENCY_USERS]
    dot_tables = {"inter": fused.table[sample]}
    dot_tables.update({m: refined[m][sample] for m in refined})
    dots = consistency_dots(model.r_u[sample], dot_tables)
    for m in ("inter", "visual", "textual"):
        out[f"dot_{m}"] = dots.get(m, float("nan"))
    return out


def evaluate_model(
    model: GTCModel,
    adj: torch.Tensor,
    features: ContentFeatures | None,
    ds: InteractionDataset,
    config: TrainConfig,
    sched: DiffusionSchedule,
    split: int,
    with_diagnostics: bool = False,
) -> tuple[dict[tuple[str, int], float], dict[str, float]]:
    spec = variant_spec(config.variant)
    model.eval()
    with torch.no_grad():
        tables = model.channel_tables(adj, features)
        refined = refine_eval(model, tables, sched, config.seed, spec)
        table = scoring_table(model, tables, refined, spec)
        metrics = evaluate_table(table, ds, config.k_list, split=split)
        diagnostics = _diagnostics(model, tables, refined, ds) if with_diagnostics else {}
    model.train()
    return metrics, diagnostics


def train(
    config: TrainConfig,
    ds: InteractionDataset,
    features: ContentFeatures | None,
) -> TrainResult:
    """Run the optimization loop; returns the best-validation state and trace."""
    spec = variant_spec(config.variant)
    if spec.content and features is None:
        raise ConfigError(f"variant {spec.tag!r} needs content features")
    if len(ds.pairs("train")) == 0:
        raise ConfigError("train split is empty")
    val_k = 10 if 10 in config.k_list else config.k_list[0]

    adj = to_torch_sparse(build_normalized_adjacency(ds))
    model = build_model(config, ds, features)
    sched = make_schedule(config.T, config.beta_start, config.beta_end)
    weights = LossWeights(
        gen=config.omega1 if spec.denoise else 0.0,
        con=config.omega2 if spec.alignment != "none" else 0.0,
        reg=config.reg,
    )
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)
    bpr_rng = numpy_rng(config.seed, "bpr")
    perm_rng = numpy_rng(config.seed, "tc-perm")
    diff_gen = torch_generator(config.seed, "diffusion")
    n_batches = max(1, math.ceil(len(ds.pairs("train")) / config.batch_size))

    result = TrainResult(model=model)
    best_state = copy.deepcopy(model.state_dict())
    epochs_since_best = 0
    for epoch in range(1, config.epochs + 1):
        epoch_losses = np.zeros(4)
        bound = float("nan")
        for _ in range(n_batches):
            triplets = torch.from_numpy(
                sample_bpr_triplets(ds, config.batch_size, bpr_rng)
            )
            optimizer.zero_grad()
            tables = model.channel_tables(adj, features)
            refined, gen = _refine_training(model, tables, sched, diff_gen, spec)
            table = scoring_table(model, tables, refined, spec)
            bpr = bpr_loss(table, triplets, ds.n_users)
            con, bound = _alignment_loss(
                tables, refined, spec, ds.n_users, perm_rng, config.content_batch
            )
            try:
                loss = total_loss(bpr, gen, con, model.regularized_params(), weights)
            except NumericalError as err:
                divergence = NumericalError(f"{err} at epoch {epoch}")
                divergence.trace = result.trace
                raise divergence from err
            loss.backward()
            # the one-shot x0 estimate divides by sqrt(alpha_bar_t); while the
            # denoiser is still rough the high-t rows can spike the gradients,
            # so cap the global norm
            torch.nn.utils.clip_grad_norm_(model.parameters(), GRAD_CLIP_NORM)
            optimizer.step()
            epoch_losses += [float(x.detach()) for x in (bpr, gen, con, loss)]
        epoch_losses /= n_batches

        row = dict(zip(TRACE_COLUMNS[1:5], epoch_losses.tolist()))
        row["epoch"] = epoch
        row["tc_bound"] = bound
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            metrics, diagnostics = evaluate_model(
                model, adj, features, ds, config, sched, split=VAL, with_diagnostics=True
            )
            row["val_ndcg"] = metrics[("ndcg", val_k)]
            row.update(diagnostics)
            if row["val_ndcg"] > result.best_val_ndcg:
                result.best_val_ndcg = row["val_ndcg"]
                result.best_epoch = epoch
                best_state = copy.deepcopy(model.state_dict())
                epochs_since_best = 0
            else:
                epochs_since_best += config.eval_every
        result.trace.append({c: row.get(c, float("nan")) for c in TRACE_COLUMNS})
        if epochs_since_best >= config.patience:
            break

    model.load_state_dict(best_state)
    return result
