"""The full recommendation model: parameters, channels, and fusion paths.

Content channels are optional so ablated builds (interaction-only, a single
content modality, no denoiser) share one code path. Scoring always reduces
to a single table whose user/item row dot products rank items: the gated
residual table for fused builds, or the channel-concatenated table when the
build sums per-channel dot products instead.
"""

from __future__ import annotations

import torch
from torch import nn

from .data import ContentFeatures
from .diffusion import Denoiser, DenoiserSpec
from .encoder import lightgcn_propagate, xavier_table
from .errors import DataError
from .fusion import FusedState, fuse_content, gated_fuse
from .seeding import derived_seed, torch_generator

CONTENT_MODALITIES = ("visual", "textual")

MIN_GATE_TEMPERATURE = 1e-4


class GTCModel(nn.Module):
    """Embedding tables, projections, shared denoiser, and gate temperature."""

    def __init__(
        self,
        n_users: int,
        n_items: int,
        d: int,
        feature_dims: dict[str, int],
        seed: int = 0,
        n_layers: int = 2,
        content: tuple[str, ...] = CONTENT_MODALITIES,
        with_denoiser: bool = True,
        denoiser_spec: DenoiserSpec = DenoiserSpec(),
        tau_init: float = 1.0,
    ):
        super().__init__()
        if d < 1:
            raise DataError("embedding dimension must be >= 1")
        unknown = set(content) - set(CONTENT_MODALITIES)
        if unknown:
            raise DataError(f"unknown content modalities: {sorted(unknown)}")
        missing = set(content) - set(feature_dims)
        if missing:
            raise DataError(f"no feature width given for: {sorted(missing)}")
        if tau_init <= 0:
            raise DataError("gate temperature must start positive")
        self.n_users = n_users
        self.n_items = n_items
        self.d = d
        self.n_layers = n_layers
        self.content = tuple(m for m in CONTENT_MODALITIES if m in content)
        self.r_u = nn.Parameter(
            xavier_table(n_users, d, torch_generator(seed, "init", "r_u"))
        )
        self.r_e = nn.Parameter(
            xavier_table(n_items, d, torch_generator(seed, "init", "r_e"))
        )
        self.proj = nn.ParameterDict(
            {
                m: nn.Parameter(
                    xavier_table(
                        feature_dims[m],
                        d,
                        torch_generator(seed, "init", f"proj_{m}"),
                        fan_in=feature_dims[m],
                        fan_out=d,
                    )
                )
                for m in self.content
            }
        )
        if with_denoiser and self.content:
            self.denoiser = Denoiser(d, denoiser_spec)
            self.denoiser.reset_parameters(torch_generator(seed, "init", "denoiser"))
        else:
            self.denoiser = None
        self.tau = nn.Parameter(torch.tensor(float(tau_init)))

    @property
    def gate_temperature(self) -> torch.Tensor:
        return torch.clamp(self.tau, min=MIN_GATE_TEMPERATURE)

    def regularized_params(self) -> list[torch.Tensor]:
        """Tables and projections covered by the l2 penalty (denoiser excluded)."""
        return [self.r_u, self.r_e, *self.proj.values()]

    def channel_tables(
        self, adj: torch.Tensor, features: ContentFeatures | None
    ) -> dict[str, torch.Tensor]:
        """Propagate each channel over the shared graph; keys: inter + content."""
        if self.content and features is None:
            raise DataError("content channels need item features")
        inputs = {"inter": torch.cat([self.r_u, self.r_e], dim=0)}
        for m in self.content:
            raw = torch.from_numpy(getattr(features, m)).to(self.r_u.dtype)
            if raw.shape[0] != self.n_items:
                raise DataError(
                    f"{m} features have {raw.shape[0]} rows for {self.n_items} items"
                )
            inputs[m] = torch.cat([self.r_u, raw @ self.proj[m]], dim=0)
        return {
            name: lightgcn_propagate(adj, x, self.n_layers)
            for name, x in inputs.items()
        }

    def fuse(self, inter: torch.Tensor, refined: dict[str, torch.Tensor]) -> FusedState:
        """Gated residual fusion of whatever refined content is present."""
        present = [refined[m] for m in CONTENT_MODALITIES if m in refined]
        if not present:
            return FusedState(table=inter, gate=torch.zeros(inter.shape[0], dtype=inter.dtype))
        blended = present[0] if len(present) == 1 else fuse_content(*present)
        return gated_fuse(inter, blended, self.gate_temperature)

    @staticmethod
    def concat_table(tables: dict[str, torch.Tensor]) -> torch.Tensor:
        """Side-by-side channels; dot products then sum the per-channel scores."""
        order = ["inter"] + [m for m in CONTENT_MODALITIES if m in tables]
        return torch.cat([tables[name] for name in order], dim=1)
