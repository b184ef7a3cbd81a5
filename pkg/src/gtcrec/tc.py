"""Total-correlation objectives and exact discrete oracles.

The trainable side is a trilinear InfoNCE: matched (interaction, visual,
textual) rows score high, independently shuffled rows score low, and
log N minus the per-anchor loss reads out a lower bound on the total
correlation of the three modality variables. The oracle side computes TC
and its pairwise/conditional decomposition exactly on small discrete joints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from scipy.stats import entropy as _shannon

from .errors import DataError

MODALITIES = ("inter", "visual", "textual")

CONTRASTIVE_TEMPERATURE = 0.2


@dataclass
class TriModalBatch:
    """Row-aligned embedding tables: row i is the same entity in each modality."""

    inter: torch.Tensor
    visual: torch.Tensor
    textual: torch.Tensor

    def __post_init__(self):
        shapes = {tuple(x.shape) for x in (self.inter, self.visual, self.textual)}
        if len(shapes) != 1:
            raise DataError(f"modality tables disagree on shape: {sorted(shapes)}")

    @property
    def n_rows(self) -> int:
        return self.inter.shape[0]


def multilinear_score(
    x: torch.Tensor,
    y: torch.Tensor,
    z: torch.Tensor,
    temperature: float = CONTRASTIVE_TEMPERATURE,
) -> torch.Tensor:
    """Three-way inner product Σ_d x_d y_d z_d / temperature (broadcasts over rows)."""
    if not (x.shape[-1] == y.shape[-1] == z.shape[-1]):
        raise DataError(
            f"dimension mismatch: {x.shape[-1]}, {y.shape[-1]}, {z.shape[-1]}"
        )
    return (x * y * z).sum(dim=-1) / temperature


def _as_permutation(perm, n: int) -> torch.Tensor:
    idx = torch.as_tensor(np.asarray(perm), dtype=torch.long)
    if idx.shape != (n,) or not torch.equal(torch.sort(idx).values, torch.arange(n)):
        raise DataError(f"not a permutation of {n} rows")
    return idx


def anchor_contrastive_loss(
    batch: TriModalBatch,
    perm_v,
    perm_t,
    anchor: str,
    temperature: float = CONTRASTIVE_TEMPERATURE,
) -> torch.Tensor:
    """InfoNCE over trilinear scores with one modality held as the anchor.

    The positive for row i keeps all three modalities aligned; negatives
    keep the anchor row and swap in independently shuffled rows of the other
    two tables (perm_v for the first non-anchor, perm_t for the second, in
    (inter, visual, textual) order), skipping j == i. The positive stays in
    the denominator, so the loss is ≥ 0 and capped near log N.
    """
    n = batch.n_rows
    if n < 2:
        raise DataError("contrastive loss needs at least two rows")
    if anchor not in MODALITIES:
        raise DataError(f"unknown anchor {anchor!r}")
    tables = {
        m: torch.nn.functional.normalize(getattr(batch, m), dim=-1) for m in MODALITIES
    }
    a = tables.pop(anchor)
    y, z = tables.values()
    perm_v = _as_permutation(perm_v, n)
    perm_t = _as_permutation(perm_t, n)

    pos = multilinear_score(a, y, z, temperature)
    neg = a @ (y[perm_v] * z[perm_t]).T / temperature
    neg = neg.masked_fill(torch.eye(n, dtype=torch.bool), float("-inf"))
    logits = torch.cat([pos.unsqueeze(1), neg], dim=1)
    return (torch.logsumexp(logits, dim=1) - pos).mean()


def symmetrized_tc_loss(
    batch: TriModalBatch,
    rng: np.random.Generator,
    temperature: float = CONTRASTIVE_TEMPERATURE,
) -> torch.Tensor:
    """Sum of the three anchor losses, each with freshly drawn shuffles."""
    n = batch.n_rows
    total = torch.zeros(())
    for anchor in MODALITIES:
        total = total + anchor_contrastive_loss(
            batch, rng.permutation(n), rng.permutation(n), anchor, temperature
        )
    return total


def tc_lower_bound(mean_loss: float, n: int) -> float:
    """InfoNCE readout: log N minus the mean per-anchor loss."""
    if n < 2:
        raise DataError("bound needs at least two rows")
    return float(np.log(n) - mean_loss)


def pairwise_infonce(
    x: torch.Tensor,
    y: torch.Tensor,
    temperature: float = CONTRASTIVE_TEMPERATURE,
) -> torch.Tensor:
    """Two-modality InfoNCE on dot products, averaged over both anchor roles."""
    if x.shape != y.shape:
        raise DataError(f"paired tables disagree on shape: {tuple(x.shape)} vs {tuple(y.shape)}")
    if x.shape[0] < 2:
        raise DataError("contrastive loss needs at least two rows")
    xn = torch.nn.functional.normalize(x, dim=-1)
    yn = torch.nn.functional.normalize(y, dim=-1)
    logits = xn @ yn.T / temperature
    pos = torch.diagonal(logits)
    fwd = (torch.logsumexp(logits, dim=1) - pos).mean()
    bwd = (torch.logsumexp(logits, dim=0) - pos).mean()
    return 0.5 * (fwd + bwd)


# --- exact oracles on discrete joints -------------------------------------


def _validate_pmf(pmf, ndim: int) -> np.ndarray:
    pmf = np.asarray(pmf, dtype=np.float64)
    if pmf.ndim != ndim:
        raise DataError(f"expected a {ndim}-way joint, got {pmf.ndim} axes")
    if (pmf < 0).any():
        raise DataError("joint has negative mass")
    if abs(pmf.sum() - 1.0) > 1e-12:
        raise DataError(f"joint mass sums to {pmf.sum()!r}, not 1")
    return pmf


def _marginal_entropy(pmf: np.ndarray, keep: tuple[int, ...]) -> float:
    drop = tuple(ax for ax in range(pmf.ndim) if ax not in keep)
    return float(_shannon(pmf.sum(axis=drop).ravel()))


def mutual_information(joint: np.ndarray) -> float:
    """I(X;Y) in nats from a two-way joint pmf."""
    pmf = _validate_pmf(joint, ndim=2)
    return (
        _marginal_entropy(pmf, (0,))
        + _marginal_entropy(pmf, (1,))
        - float(_shannon(pmf.ravel()))
    )


def brute_force_tc(joint: np.ndarray) -> float:
    """Exact TC in nats: Σ p log[p / (p_s p_v p_t)], zero cells skipped."""
    pmf = _validate_pmf(joint, ndim=3)
    marg = [pmf.sum(axis=tuple(ax for ax in range(3) if ax != k)) for k in range(3)]
    prod = np.einsum("s,v,t->svt", *marg)
    hit = pmf > 0
    return float(np.sum(pmf[hit] * np.log(pmf[hit] / prod[hit])))


def tc_decomposition(joint: np.ndarray) -> tuple[float, float]:
    """Sums of the three pairwise MIs and the three conditional MIs (nats).

    Satisfies 3·TC = 2·pairwise_sum + conditional_sum for every valid joint.
    """
    pmf = _validate_pmf(joint, ndim=3)
    h = {keep: _marginal_entropy(pmf, keep) for keep in [(0,), (1,), (2,), (0, 1), (0, 2), (1, 2)]}
    h_all = float(_shannon(pmf.ravel()))
    pairwise = (
        (h[(0,)] + h[(1,)] - h[(0, 1)])
        + (h[(0,)] + h[(2,)] - h[(0, 2)])
        + (h[(1,)] + h[(2,)] - h[(1, 2)])
    )
    conditional = (
        (h[(0, 2)] + h[(1, 2)] - h[(2,)] - h_all)
        + (h[(0, 1)] + h[(1, 2)] - h[(1,)] - h_all)
        + (h[(0, 1)] + h[(0, 2)] - h[(0,)] - h_all)
    )
    return pairwise, conditional
