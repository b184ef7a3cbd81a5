"""Ranking metrics and the diagnostic readouts used by the experiment harness."""

from __future__ import annotations

import numpy as np
import torch

from .data import TEST, TRAIN, InteractionDataset
from .errors import DataError

DEFAULT_K_LIST = (5, 10, 20, 50)

METRIC_NAMES = ("ndcg", "recall", "map")


def rank_items(scores: np.ndarray, train_items: np.ndarray) -> np.ndarray:
    """Item indices by descending score, ties by ascending index, train masked."""
    scores = np.asarray(scores, dtype=np.float64)
    order = np.lexsort((np.arange(len(scores)), -scores))
    if len(train_items):
        keep = np.ones(len(scores), dtype=bool)
        keep[np.asarray(train_items, dtype=np.int64)] = False
        order = order[keep[order]]
    return order


def metrics_at_k(
    ranking: np.ndarray, relevant: np.ndarray, k: int
) -> tuple[float, float, float]:
    """(NDCG@K, Recall@K, MAP@K) for one user.

    Gains are binary; NDCG discounts by 1/log2(rank+1); MAP normalizes by
    min(K, number of relevant items). An empty relevant set returns zeros
    (such users are excluded from aggregate means by the caller).
    """
    if k < 1:
        raise DataError("K must be >= 1")
    relevant = np.asarray(relevant, dtype=np.int64)
    if len(relevant) == 0:
        return 0.0, 0.0, 0.0
    top = np.asarray(ranking[:k], dtype=np.int64)
    hits = np.isin(top, relevant)
    ranks = np.arange(1, len(top) + 1, dtype=np.float64)
    dcg = float(np.sum(hits / np.log2(ranks + 1)))
    n_ideal = min(k, len(relevant))
    idcg = float(np.sum(1.0 / np.log2(np.arange(1, n_ideal + 1) + 1)))
    ndcg = dcg / idcg
    recall = float(hits.sum()) / len(relevant)
    precision_at_hit = np.cumsum(hits) / ranks
    ap = float(np.sum(precision_at_hit * hits)) / n_ideal
    return ndcg, recall, ap


def evaluate_table(
    table: torch.Tensor,
    ds: InteractionDataset,
    k_list: tuple[int, ...] = DEFAULT_K_LIST,
    split: int = TEST,
) -> dict[tuple[str, int], float]:
    """Mean metrics over users with at least one relevant item in `split`.

    `table` holds user rows then item rows; scores are row dot products over
    all items minus each user's train items.
    """
    if not k_list or list(k_list) != sorted(set(k_list)):
        raise DataError("K list must be non-empty, ascending, unique")
    with torch.no_grad():
        users = table[: ds.n_users].double()
        items = table[ds.n_users :].double()
        scores = (users @ items.T).numpy()
    train_items = ds.items_by_user(TRAIN)
    relevant_items = ds.items_by_user(split)
    totals = {(m, k): 0.0 for m in METRIC_NAMES for k in k_list}
    n_scored = 0
    for u in range(ds.n_users):
        relevant = relevant_items[u]
        if len(relevant) == 0:
            continue
        n_scored += 1
        ranking = rank_items(scores[u], train_items[u])
        for k in k_list:
            ndcg, recall, ap = metrics_at_k(ranking, relevant, k)
            totals[("ndcg", k)] += ndcg
            totals[("recall", k)] += recall
            totals[("map", k)] += ap
    if n_scored == 0:
        raise DataError(f"no user has items in split {split}")
    return {key: value / n_scored for key, value in totals.items()}


def _row_cosines(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Per-row cosine; rows with zero norm on either side give 0."""
    dots = (a * b).sum(dim=-1)
    norms = a.norm(dim=-1) * b.norm(dim=-1)
    return torch.where(
        norms > 0, dots / torch.clamp(norms, min=torch.finfo(a.dtype).tiny), torch.zeros_like(dots)
    )


def modality_balance_score(
    fused_rows: torch.Tensor, channel_rows: dict[str, torch.Tensor]
) -> float:
    """Mean over rows of 1 - (max - min) of fused-vs-channel cosines."""
    if not channel_rows:
        raise DataError("balance score needs at least one channel")
    with torch.no_grad():
        sims = torch.stack(
            [_row_cosines(fused_rows, rows) for rows in channel_rows.values()]
        )
        spread = sims.max(dim=0).values - sims.min(dim=0).values
        return float((1.0 - spread).mean())


def consistency_dots(
    user_vectors: torch.Tensor, channel_user_rows: dict[str, torch.Tensor]
) -> dict[str, float]:
    """Mean dot product of base user vectors with each table's user rows."""
    with torch.no_grad():
        return {
            name: float((user_vectors * rows).sum(dim=-1).mean())
            for name, rows in channel_user_rows.items()
        }


def test_user_ids(ds: InteractionDataset, split: int = TEST) -> np.ndarray:
    """Users owning at least one interaction in the given split."""
    pairs = ds.pairs(split)
    return np.unique(pairs[:, 0])
