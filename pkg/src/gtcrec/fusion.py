"""Gated residual fusion, ranking scores, and the composite objective."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import torch

from .errors import DataError, NumericalError


@dataclass(frozen=True)
class LossWeights:
    """Mixing weights: generation, contrastive alignment, and l2 penalty."""

    gen: float = 0.6
    con: float = 0.6
    reg: float = 0.01

    def __post_init__(self):
        for name in ("gen", "con", "reg"):
            if getattr(self, name) < 0:
                raise DataError(f"loss weight {name} must be non-negative")


@dataclass
class FusedState:
    """Fused embedding table (residual form) plus the per-row gate values."""

    table: torch.Tensor
    gate: torch.Tensor


def fuse_content(visual: torch.Tensor, textual: torch.Tensor) -> torch.Tensor:
    """Element-wise product of the two refined content tables."""
    if visual.shape != textual.shape:
        raise DataError(
            f"content tables disagree on shape: {tuple(visual.shape)} vs {tuple(textual.shape)}"
        )
    return visual * textual


def gated_fuse(inter: torch.Tensor, content: torch.Tensor, tau) -> FusedState:
    """Residual fusion with a per-row similarity gate.

    gate = logistic(cos(inter_row, content_row) / tau); rows with zero norm on
    either side get gate 0, so degenerate content never perturbs the residual.
    """
    if inter.shape != content.shape:
        raise DataError(
            f"tables disagree on shape: {tuple(inter.shape)} vs {tuple(content.shape)}"
        )
    tau = torch.as_tensor(tau, dtype=inter.dtype)
    if not bool((tau > 0).all()):
        raise DataError("gate temperature must be positive")
    dots = (inter * content).sum(dim=-1)
    norms = inter.norm(dim=-1) * content.norm(dim=-1)
    live = norms > 0
    cos = dots / torch.clamp(norms, min=torch.finfo(inter.dtype).tiny)
    gate = torch.where(live, torch.sigmoid(cos / tau), torch.zeros_like(dots))
    return FusedState(table=inter + gate.unsqueeze(-1) * content, gate=gate)


def dot_score(user_rows: torch.Tensor, item_rows: torch.Tensor) -> torch.Tensor:
    """Row-wise dot products between fused user and item rows."""
    return (user_rows * item_rows).sum(dim=-1)


def bpr_loss(table: torch.Tensor, triplets: torch.Tensor, n_users: int) -> torch.Tensor:
    """Mean -log sigmoid(score(u, pos) - score(u, neg)) over (u, pos, neg) rows."""
    if len(triplets) == 0:
        raise DataError("empty triplet batch")
    u = table[triplets[:, 0]]
    pos = table[n_users + triplets[:, 1]]
    neg = table[n_users + triplets[:, 2]]
    margin = dot_score(u, pos) - dot_score(u, neg)
    return -torch.nn.functional.logsigmoid(margin).mean()


def squared_norm(params: Iterable[torch.Tensor]) -> torch.Tensor:
    total = None
    for p in params:
        total = (p**2).sum() if total is None else total + (p**2).sum()
    return torch.zeros(()) if total is None else total


def total_loss(
    bpr: torch.Tensor,
    gen: torch.Tensor,
    con: torch.Tensor,
    params: Iterable[torch.Tensor],
    weights: LossWeights,
) -> torch.Tensor:
    """bpr + gen_weight * gen + con_weight * con + reg * ||params||^2."""
    reg = squared_norm(params)
    for name, value in (("bpr", bpr), ("gen", gen), ("con", con), ("reg", reg)):
        if not torch.isfinite(torch.as_tensor(value)).all():
            raise NumericalError(f"non-finite {name} loss component")
    return bpr + weights.gen * gen + weights.con * con + weights.reg * reg
