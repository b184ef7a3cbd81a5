"""Modality channels: input assembly and parameter-free graph propagation.

Three channels (interaction, visual, textual) propagate over the same
normalized bipartite adjacency; they share only the graph and the initial
user rows, never parameters.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp
import torch

from .errors import DataError


def xavier_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def xavier_table(
    n_rows: int,
    n_cols: int,
    generator: torch.Generator,
    fan_in: int | None = None,
    fan_out: int | None = None,
    dtype: torch.dtype = torch.float32,
) -> torch.Tensor:
    """Uniform init in [-b, b], b = sqrt(6/(fan_in+fan_out)).

    Embedding tables use fan_in = fan_out = n_cols (each row is one entity's
    vector); projections pass their matrix dims explicitly.
    """
    if fan_in is None:
        fan_in = n_cols
    if fan_out is None:
        fan_out = n_cols
    b = xavier_bound(fan_in, fan_out)
    out = torch.empty(n_rows, n_cols, dtype=dtype)
    out.uniform_(-b, b, generator=generator)
    return out


def to_torch_sparse(adj: sp.spmatrix, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    coo = adj.tocoo()
    indices = torch.from_numpy(np.vstack([coo.row, coo.col])).long()
    values = torch.from_numpy(coo.data).to(dtype)
    return torch.sparse_coo_tensor(
        indices, values, coo.shape, check_invariants=False
    ).coalesce()


def assemble_modal_inputs(
    r_u: torch.Tensor,
    r_e: torch.Tensor,
    visual: torch.Tensor,
    textual: torch.Tensor,
    w_v: torch.Tensor,
    w_t: torch.Tensor,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Stack per-channel input tables [user rows ; item rows].

    Users have no content, so the content channels reuse the initialized user
    embeddings; content item rows are the projected raw features.
    """
    d = r_u.shape[1]
    if r_e.shape[1] != d or w_v.shape[1] != d or w_t.shape[1] != d:
        raise DataError("all channel inputs must share the embedding dimension")
    if visual.shape[1] != w_v.shape[0] or textual.shape[1] != w_t.shape[0]:
        raise DataError("feature width does not match its projection")
    if visual.shape[0] != r_e.shape[0] or textual.shape[0] != r_e.shape[0]:
        raise DataError("feature row count does not match item count")
    r_inter = torch.cat([r_u, r_e], dim=0)
    r_visual = torch.cat([r_u, visual @ w_v], dim=0)
    r_textual = torch.cat([r_u, textual @ w_t], dim=0)
    return r_inter, r_visual, r_textual


def lightgcn_propagate(adj: torch.Tensor, x: torch.Tensor, n_layers: int) -> torch.Tensor:
    """Mean over layers 0..L of repeated neighborhood averaging x <- adj @ x."""
    if n_layers < 0:
        raise DataError("layer count must be >= 0")
    if adj.shape[0] != x.shape[0]:
        raise DataError(f"adjacency is {adj.shape[0]}-node but input has {x.shape[0]} rows")
    acc = x
    layer = x
    for _ in range(n_layers):
        layer = torch.sparse.mm(adj, layer)
        acc = acc + layer
    return acc / (n_layers + 1)
