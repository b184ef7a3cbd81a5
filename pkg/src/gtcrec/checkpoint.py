"""Versioned model checkpoints: text manifest, little-endian float32 payload."""

from __future__ import annotations

import numpy as np
import torch

from .errors import DataError

MAGIC = "GTCCKPT"
VERSION = 1


def save_checkpoint(path, state: dict[str, torch.Tensor]) -> None:
    """Write tensors with a manifest of (name, shape, byte offset) lines."""
    entries = []
    blobs = []
    offset = 0
    for name, tensor in state.items():
        # astype rather than ascontiguousarray: the latter promotes 0-d
        # arrays to 1-d and would round-trip scalars with the wrong shape
        arr = tensor.detach().cpu().numpy().astype("<f4", copy=False)
        blob = arr.tobytes()
        shape = ",".join(str(s) for s in arr.shape)
        entries.append(f"{name}\t{shape}\t{offset}")
        blobs.append(blob)
        offset += len(blob)
    header = [f"{MAGIC} {VERSION} {len(entries)}", *entries, "end"]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("utf-8"))
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> dict[str, torch.Tensor]:
    with open(path, "rb") as fh:
        first = fh.readline().decode("utf-8").split()
        if len(first) != 3 or first[0] != MAGIC:
            raise DataError(f"not a checkpoint file: {path}")
        if first[1] != str(VERSION):
            raise DataError(f"unsupported checkpoint version {first[1]}")
        n_entries = int(first[2])
        manifest = []
        for _ in range(n_entries):
            line = fh.readline().decode("utf-8").rstrip("\n")
            name, shape, offset = line.split("\t")
            dims = tuple(int(tok) for tok in shape.split(",") if tok)
            manifest.append((name, dims, int(offset)))
        if fh.readline().decode("utf-8").strip() != "end":
            raise DataError("checkpoint manifest not terminated")
        payload = fh.read()
    state = {}
    for name, dims, offset in manifest:
        count = int(np.prod(dims)) if dims else 1
        end = offset + 4 * count
        if end > len(payload):
            raise DataError(f"checkpoint payload truncated at tensor {name!r}")
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        state[name] = torch.from_numpy(arr.copy().reshape(dims))
    return state
