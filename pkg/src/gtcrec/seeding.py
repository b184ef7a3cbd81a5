"""Deterministic derivation of independent RNG streams from one base seed."""

from __future__ import annotations

import zlib

import numpy as np
import torch


def derived_seed(seed: int, *tags: str | int) -> int:
    """Stable sub-seed for a named stream (crc32-based, not Python hash)."""
    words = [seed & 0xFFFFFFFF]
    for tag in tags:
        if isinstance(tag, int):
            words.append(tag & 0xFFFFFFFF)
        else:
            words.append(zlib.crc32(tag.encode("utf-8")))
    return int(np.random.SeedSequence(words).generate_state(1)[0])


def numpy_rng(seed: int, *tags: str | int) -> np.random.Generator:
    return np.random.default_rng(derived_seed(seed, *tags))


def torch_generator(seed: int, *tags: str | int) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed(derived_seed(seed, *tags))
    return gen
