"""Interaction data: loading, k-core filtering, splits, graph, sampling, synthesis.

Users and items are reindexed densely from 0. In the bipartite node layout,
users occupy indices ``0 .. n_users-1`` and items occupy
``n_users .. n_users+n_items-1``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .errors import DataError

TRAIN, VAL, TEST = 0, 1, 2
SPLIT_NAMES = {"train": TRAIN, "val": VAL, "test": TEST}

FEATURE_MAGIC = "GTCMAT"


@dataclass
class InteractionDataset:
    """A deduplicated set of (user, item) interactions with optional split tags."""

    n_users: int
    n_items: int
    interactions: np.ndarray  # (n, 2) int64, columns (user, item)
    split_labels: np.ndarray | None = None  # (n,) int8 in {TRAIN, VAL, TEST}

    def __post_init__(self):
        self.interactions = np.asarray(self.interactions, dtype=np.int64).reshape(-1, 2)
        if len(self.interactions) and (
            self.interactions[:, 0].max() >= self.n_users
            or self.interactions[:, 1].max() >= self.n_items
            or self.interactions.min() < 0
        ):
            raise DataError("interaction indices out of range")

    @property
    def n_interactions(self) -> int:
        return len(self.interactions)

    def pairs(self, split: int | str | None = None) -> np.ndarray:
        """Interaction pairs, optionally restricted to one split."""
        if split is None:
            return self.interactions
        if self.split_labels is None:
            raise DataError("dataset has no split labels")
        code = SPLIT_NAMES[split] if isinstance(split, str) else split
        return self.interactions[self.split_labels == code]

    def items_by_user(self, split: int | str | None = None) -> list[np.ndarray]:
        """Per-user arrays of item indices, optionally restricted to one split."""
        pairs = self.pairs(split)
        out = [[] for _ in range(self.n_users)]
        for u, i in pairs:
            out[u].append(i)
        return [np.asarray(v, dtype=np.int64) for v in out]


@dataclass
class ContentFeatures:
    """Dense per-item visual and textual feature matrices."""

    visual: np.ndarray  # (n_items, d_v)
    textual: np.ndarray  # (n_items, d_t)

    def __post_init__(self):
        self.visual = np.asarray(self.visual, dtype=np.float32)
        self.textual = np.asarray(self.textual, dtype=np.float32)
        for name, mat in (("visual", self.visual), ("textual", self.textual)):
            if mat.ndim != 2 or mat.shape[1] < 1:
                raise DataError(f"{name} features must be a 2-d matrix with >= 1 column")
            _check_finite(mat, name)
        if self.visual.shape[0] != self.textual.shape[0]:
            raise DataError(
                f"visual has {self.visual.shape[0]} rows but textual has "
                f"{self.textual.shape[0]}"
            )

    @property
    def n_items(self) -> int:
        return self.visual.shape[0]


def _check_finite(mat: np.ndarray, name: str) -> None:
    bad = ~np.isfinite(mat)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise DataError(f"non-finite value in {name} features at row {r}, column {c}")


def _kcore(pairs: np.ndarray, k: int) -> np.ndarray:
    """Iteratively drop users/items with fewer than k interactions until stable."""
    while len(pairs):
        u_deg = np.bincount(pairs[:, 0])
        i_deg = np.bincount(pairs[:, 1])
        keep = (u_deg[pairs[:, 0]] >= k) & (i_deg[pairs[:, 1]] >= k)
        if keep.all():
            break
        pairs = pairs[keep]
    return pairs


def _reindex(pairs: np.ndarray) -> tuple[np.ndarray, int, int]:
    users = np.unique(pairs[:, 0])
    items = np.unique(pairs[:, 1])
    u_map = np.zeros(users.max() + 1, dtype=np.int64)
    i_map = np.zeros(items.max() + 1, dtype=np.int64)
    u_map[users] = np.arange(len(users))
    i_map[items] = np.arange(len(items))
    out = np.column_stack([u_map[pairs[:, 0]], i_map[pairs[:, 1]]])
    return out, len(users), len(items)


def core_filter(
    ds: InteractionDataset, k: int
) -> tuple[InteractionDataset, np.ndarray, np.ndarray]:
    """k-core an in-memory dataset; also returns the surviving original ids.

    The id arrays let callers filter row-aligned side data (feature matrices,
    planted ground truth) to match the reindexed dataset.
    """
    if k < 1:
        raise DataError("k_core must be >= 1")
    pairs = _kcore(ds.interactions, k)
    if not len(pairs):
        raise DataError(f"empty result: no users/items survive {k}-core filtering")
    kept_users = np.unique(pairs[:, 0])
    kept_items = np.unique(pairs[:, 1])
    pairs, n_users, n_items = _reindex(pairs)
    return InteractionDataset(n_users, n_items, pairs), kept_users, kept_items


def load_interactions(path: str | os.PathLike, k_core: int = 5) -> InteractionDataset:
    """Parse a `user_id  item_id [extra...]` text file and k-core filter it.

    Raw ids may be arbitrary tokens; survivors are reindexed densely from 0
    in order of first appearance. Duplicate (user, item) lines collapse to a
    single interaction.
    """
    if k_core < 1:
        raise DataError("k_core must be >= 1")
    if not os.path.exists(path):
        raise DataError(f"interaction file not found: {path}")
    u_ids: dict[str, int] = {}
    i_ids: dict[str, int] = {}
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) < 2:
                raise DataError(f"malformed interaction line {lineno}: {line.strip()!r}")
            u = u_ids.setdefault(tokens[0], len(u_ids))
            i = i_ids.setdefault(tokens[1], len(i_ids))
            rows.append((u, i))
    if not rows:
        raise DataError("no interactions in file")
    pairs = np.unique(np.asarray(rows, dtype=np.int64), axis=0)
    pairs = _kcore(pairs, k_core)
    if not len(pairs):
        raise DataError(f"empty result: no users/items survive {k_core}-core filtering")
    pairs, n_users, n_items = _reindex(pairs)
    return InteractionDataset(n_users, n_items, pairs)


def split_dataset(
    ds: InteractionDataset,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> InteractionDataset:
    """Tag each interaction train/val/test, independently per user.

    Each of a user's interactions draws its tag from `ratios`; if a user ends
    up with no train interaction, one of theirs is reassigned to train so
    every user keeps training history.
    """
    ratios = np.asarray(ratios, dtype=np.float64)
    if ratios.shape != (3,) or (ratios < 0).any():
        raise DataError("ratios must be three non-negative numbers")
    if abs(ratios.sum() - 1.0) > 1e-9:
        raise DataError(f"ratios must sum to 1, got {ratios.sum()!r}")
    rng = np.random.default_rng(seed)
    labels = np.empty(ds.n_interactions, dtype=np.int8)
    order = np.lexsort((ds.interactions[:, 1], ds.interactions[:, 0]))
    users = ds.interactions[order, 0]
    boundaries = np.searchsorted(users, np.arange(ds.n_users + 1))
    for u in range(ds.n_users):
        idx = order[boundaries[u] : boundaries[u + 1]]
        if not len(idx):
            continue
        tags = rng.choice(3, size=len(idx), p=ratios)
        if not (tags == TRAIN).any():
            tags[rng.integers(len(idx))] = TRAIN
        labels[idx] = tags
    return replace(ds, split_labels=labels)


def build_normalized_adjacency(ds: InteractionDataset) -> sp.csr_matrix:
    """Symmetric-normalized bipartite adjacency over train edges.

    Entry (u, n_users+i) equals 1/sqrt(deg(u) * deg(i)) with degrees counted
    over train interactions; isolated nodes get all-zero rows.
    """
    pairs = ds.pairs("train")
    n = ds.n_users + ds.n_items
    rows = np.concatenate([pairs[:, 0], pairs[:, 1] + ds.n_users])
    cols = np.concatenate([pairs[:, 1] + ds.n_users, pairs[:, 0]])
    adj = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    deg = np.asarray(adj.sum(axis=1)).ravel()
    with np.errstate(divide="ignore"):
        d_inv_sqrt = np.power(deg, -0.5)
    d_inv_sqrt[~np.isfinite(d_inv_sqrt)] = 0.0
    d = sp.diags(d_inv_sqrt)
    return (d @ adj @ d).tocsr()


def sample_bpr_triplets(
    ds: InteractionDataset,
    batch_size: int,
    rng: np.random.Generator,
    max_retries: int = 200,
) -> np.ndarray:
    """Sample (user, pos_item, neg_item) triplets for pairwise ranking.

    (user, pos) is drawn uniformly over train edges; neg is drawn uniformly
    over items the user never interacted with (any split), by rejection.
    """
    train = ds.pairs("train")
    if not len(train):
        raise DataError("train split is empty")
    if batch_size == 0:
        return np.empty((0, 3), dtype=np.int64)
    interacted = [set() for _ in range(ds.n_users)]
    for u, i in ds.interactions:
        interacted[u].add(int(i))
    out = np.empty((batch_size, 3), dtype=np.int64)
    edge_idx = rng.integers(len(train), size=batch_size)
    for row in range(batch_size):
        u, pos = train[edge_idx[row]]
        for _ in range(max_retries):
            if len(interacted[u]) >= ds.n_items:
                # user saw every item; try another train edge
                u, pos = train[rng.integers(len(train))]
                continue
            neg = int(rng.integers(ds.n_items))
            if neg not in interacted[u]:
                break
        else:
            raise DataError("negative sampling failed: no un-interacted item found")
        out[row] = (u, pos, neg)
    return out


@dataclass
class SyntheticGroundTruth:
    """Planted structure behind a synthetic dataset, for diagnostics."""

    groups: np.ndarray  # (n_users,) group index per user
    group_modality: list[str]  # per group, which modality drives its users
    preferences: np.ndarray  # (n_users, attr_dim) planted preference vectors
    visual_attributes: np.ndarray  # (n_items, attr_dim)
    textual_attributes: np.ndarray  # (n_items, attr_dim)

    def attributes_for_user(self, u: int) -> np.ndarray:
        mod = self.group_modality[self.groups[u]]
        return self.visual_attributes if mod == "visual" else self.textual_attributes

    def oracle_scores(self, u: int) -> np.ndarray:
        """Planted relevance of every item to user u."""
        return self.attributes_for_user(u) @ self.preferences[u]


def generate_synthetic(
    n_users: int,
    n_items: int,
    d_v: int = 64,
    d_t: int = 48,
    n_user_groups: int = 2,
    seed: int = 0,
    interactions_per_user: int = 14,
    attr_dim: int = 8,
    feature_noise: float = 0.7,
    choice_temperature: float = 0.9,
    corrupt_fraction: float = 0.0,
    swap_fraction: float = 0.0,
) -> tuple[InteractionDataset, ContentFeatures, SyntheticGroundTruth]:
    """Generate interactions whose structure lives in latent content attributes.

    Items carry latent visual and textual attribute vectors. Users belong to
    groups that alternate between following the visual and the textual
    attributes; a user's interaction probabilities are a softmax of the dot
    product between their planted preference vector and the attributes of
    their group's modality. Observable content features are noisy random
    linear readouts of the latent attributes. `corrupt_fraction` of item rows
    per modality (drawn independently) are replaced with pure noise, modelling
    broken readouts (missing image, boilerplate text) that carry no attribute
    signal. `swap_fraction` of item rows per modality are cyclically exchanged
    between items, modelling mismatched readouts (the wrong image attached to
    a listing): unlike noise rows these still look like valid features but
    describe a different item, so they actively mislead content-side scoring
    instead of merely diluting it.
    """
    if n_user_groups < 2:
        raise DataError("need at least 2 user groups")
    if interactions_per_user > n_items:
        raise DataError("interactions_per_user exceeds n_items")
    if not 0.0 <= corrupt_fraction <= 1.0:
        raise DataError("corrupt_fraction must lie in [0, 1]")
    if not 0.0 <= swap_fraction <= 1.0:
        raise DataError("swap_fraction must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    attrs = {
        "visual": rng.standard_normal((n_items, attr_dim)),
        "textual": rng.standard_normal((n_items, attr_dim)),
    }
    group_modality = ["visual" if g % 2 == 0 else "textual" for g in range(n_user_groups)]
    groups = np.arange(n_users) % n_user_groups
    prefs = rng.standard_normal((n_users, attr_dim))
    prefs /= np.linalg.norm(prefs, axis=1, keepdims=True)

    pairs = []
    for u in range(n_users):
        scores = attrs[group_modality[groups[u]]] @ prefs[u]
        logits = scores / choice_temperature
        probs = np.exp(logits - logits.max())
        probs /= probs.sum()
        items = rng.choice(n_items, size=interactions_per_user, replace=False, p=probs)
        pairs.extend((u, int(i)) for i in items)
    ds = InteractionDataset(n_users, n_items, np.asarray(pairs, dtype=np.int64))

    def readout(latent: np.ndarray, dim: int) -> np.ndarray:
        mix = rng.standard_normal((attr_dim, dim)) / np.sqrt(attr_dim)
        out = latent @ mix + feature_noise * rng.standard_normal((n_items, dim))
        n_bad = int(round(corrupt_fraction * n_items))
        if n_bad:
            bad = rng.choice(n_items, size=n_bad, replace=False)
            out[bad] = rng.standard_normal((n_bad, dim)) * float(np.std(out))
        n_swap = int(round(swap_fraction * n_items))
        if n_swap > 1:
            swapped = rng.choice(n_items, size=n_swap, replace=False)
            out[swapped] = out[np.roll(swapped, 1)]
        return out

    features = ContentFeatures(readout(attrs["visual"], d_v), readout(attrs["textual"], d_t))
    truth = SyntheticGroundTruth(
        groups=groups,
        group_modality=group_modality,
        preferences=prefs,
        visual_attributes=attrs["visual"],
        textual_attributes=attrs["textual"],
    )
    return ds, features, truth


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------


def write_interactions(path: str | os.PathLike, ds: InteractionDataset) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for u, i in ds.interactions:
            f.write(f"{u}\t{i}\n")


def write_feature_matrix(path: str | os.PathLike, matrix: np.ndarray) -> None:
    """Write `GTCMAT <rows> <cols>` header + row-major little-endian float32."""
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    with open(path, "wb") as f:
        f.write(f"{FEATURE_MAGIC} {matrix.shape[0]} {matrix.shape[1]}\n".encode("ascii"))
        f.write(matrix.tobytes(order="C"))


def read_feature_matrix(path: str | os.PathLike) -> np.ndarray:
    if not os.path.exists(path):
        raise DataError(f"feature file not found: {path}")
    with open(path, "rb") as f:
        header = f.readline().decode("ascii", errors="replace").split()
        if len(header) != 3 or header[0] != FEATURE_MAGIC:
            raise DataError(f"{path}: not a {FEATURE_MAGIC} file")
        rows, cols = int(header[1]), int(header[2])
        payload = f.read()
    expected = rows * cols * 4
    if len(payload) != expected:
        raise DataError(f"{path}: expected {expected} payload bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype="<f4").reshape(rows, cols).astype(np.float32)


def load_content_features(
    visual_path: str | os.PathLike,
    textual_path: str | os.PathLike,
    n_items: int,
) -> ContentFeatures:
    visual = read_feature_matrix(visual_path)
    textual = read_feature_matrix(textual_path)
    for name, mat in (("visual", visual), ("textual", textual)):
        if mat.shape[0] != n_items:
            raise DataError(
                f"{name} features have {mat.shape[0]} rows but dataset has {n_items} items"
            )
        _check_finite(mat, name)
    return ContentFeatures(visual, textual)


def write_ground_truth(path: str | os.PathLike, truth: SyntheticGroundTruth) -> None:
    """Key-value sidecar recording the planted synthetic structure."""

    def fmt(vec: np.ndarray) -> str:
        return " ".join(repr(float(x)) for x in vec)

    with open(path, "w", encoding="utf-8") as f:
        f.write(f"n_users = {len(truth.groups)}\n")
        f.write(f"n_items = {len(truth.visual_attributes)}\n")
        f.write(f"attr_dim = {truth.preferences.shape[1]}\n")
        f.write(f"n_groups = {len(truth.group_modality)}\n")
        for g, mod in enumerate(truth.group_modality):
            f.write(f"group_modality.{g} = {mod}\n")
        for u, g in enumerate(truth.groups):
            f.write(f"group.{u} = {g}\n")
        for u in range(len(truth.preferences)):
            f.write(f"preference.{u} = {fmt(truth.preferences[u])}\n")
        for i in range(len(truth.visual_attributes)):
            f.write(f"visual_attr.{i} = {fmt(truth.visual_attributes[i])}\n")
        for i in range(len(truth.textual_attributes)):
            f.write(f"textual_attr.{i} = {fmt(truth.textual_attributes[i])}\n")


def read_ground_truth(path: str | os.PathLike) -> SyntheticGroundTruth:
    kv: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if "=" in line:
                key, _, value = line.partition("=")
                kv[key.strip()] = value.strip()
    n_users = int(kv["n_users"])
    n_items = int(kv["n_items"])
    n_groups = int(kv["n_groups"])

    def vec(key: str) -> np.ndarray:
        return np.array([float(x) for x in kv[key].split()])

    return SyntheticGroundTruth(
        groups=np.array([int(kv[f"group.{u}"]) for u in range(n_users)]),
        group_modality=[kv[f"group_modality.{g}"] for g in range(n_groups)],
        preferences=np.stack([vec(f"preference.{u}") for u in range(n_users)]),
        visual_attributes=np.stack([vec(f"visual_attr.{i}") for i in range(n_items)]),
        textual_attributes=np.stack([vec(f"textual_attr.{i}") for i in range(n_items)]),
    )
