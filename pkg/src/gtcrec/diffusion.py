"""Conditional denoising diffusion over embedding rows.

The forward process corrupts a table row-wise in closed form; the reverse
process walks back from pure noise with a row-wise denoiser conditioned on
the matching interaction embeddings. Timesteps are 1-indexed (t in 1..T).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .errors import DataError, NumericalError


@dataclass(frozen=True)
class DiffusionSchedule:
    """Linear variance schedule and its derived arrays (float64, length T)."""

    beta: torch.Tensor
    alpha: torch.Tensor
    alpha_bar: torch.Tensor
    sigma: torch.Tensor

    @property
    def n_steps(self) -> int:
        return len(self.beta)

    def gather(self, name: str, t: int | torch.Tensor, like: torch.Tensor) -> torch.Tensor:
        """Schedule values at (1-indexed) t, shaped to broadcast over rows of `like`."""
        arr = getattr(self, name).to(like.dtype)
        if isinstance(t, int):
            if not 1 <= t <= self.n_steps:
                raise DataError(f"timestep {t} outside 1..{self.n_steps}")
            return arr[t - 1]
        t = torch.as_tensor(t, dtype=torch.long)
        if t.numel() and not bool(((t >= 1) & (t <= self.n_steps)).all()):
            raise DataError(f"timesteps outside 1..{self.n_steps}")
        return arr[t - 1].unsqueeze(-1)


def make_schedule(n_steps: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> DiffusionSchedule:
    if n_steps < 1:
        raise DataError("schedule needs at least one step")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise DataError("need 0 < beta_start <= beta_end < 1")
    if n_steps > 1 and beta_start == beta_end:
        raise DataError("beta_start must be < beta_end for more than one step")
    beta = torch.linspace(beta_start, beta_end, n_steps, dtype=torch.float64)
    alpha = 1.0 - beta
    alpha_bar = torch.cumprod(alpha, dim=0)
    sigma = torch.sqrt(beta)
    sigma[0] = 0.0
    return DiffusionSchedule(beta, alpha, alpha_bar, sigma)


def forward_sample(
    c0: torch.Tensor,
    t: int | torch.Tensor,
    eps: torch.Tensor,
    sched: DiffusionSchedule,
) -> torch.Tensor:
    """Closed-form corruption: sqrt(abar_t) * c0 + sqrt(1 - abar_t) * eps."""
    abar = sched.gather("alpha_bar", t, c0)
    return torch.sqrt(abar) * c0 + torch.sqrt(1.0 - abar) * eps


def estimate_x0(
    ct: torch.Tensor,
    t: int | torch.Tensor,
    eps_hat: torch.Tensor,
    sched: DiffusionSchedule,
) -> torch.Tensor:
    """Invert the forward identity given a noise estimate."""
    abar = sched.gather("alpha_bar", t, ct)
    return (ct - torch.sqrt(1.0 - abar) * eps_hat) / torch.sqrt(abar)


def sinusoidal_time_embedding(t: torch.Tensor, dim: int, dtype: torch.dtype) -> torch.Tensor:
    """Standard sin/cos positional encoding of timestep indices."""
    half = dim // 2
    scale = math.log(10000.0) / max(half - 1, 1)
    freqs = torch.exp(-scale * torch.arange(half, dtype=dtype))
    angles = t.to(dtype).unsqueeze(-1) * freqs
    emb = torch.cat([torch.sin(angles), torch.cos(angles)], dim=-1)
    if dim % 2 == 1:
        emb = torch.nn.functional.pad(emb, (0, 1))
    return emb


@dataclass(frozen=True)
class DenoiserSpec:
    """Architecture knobs for the row-wise denoiser."""

    hidden: tuple[int, int] = (64, 64)  # (outer stage, bottleneck)
    time_dim: int = 32
    cond_mode: str = "concat"  # "concat" to the input row, or "add" at first hidden

    def __post_init__(self):
        if self.cond_mode not in ("concat", "add"):
            raise DataError(f"unknown condition-injection mode {self.cond_mode!r}")


class Denoiser(nn.Module):
    """Row-wise noise predictor: MLP with one (input-to-output) skip.

    The condition row is concatenated to (or projected and added at) the
    input; the sinusoidal time embedding is added to the first hidden layer.
    Rows never mix, so output row i depends only on input/condition row i.

    The prediction is the noisy row plus a learned correction whose output
    stage starts near zero: a fresh denoiser returns eps_hat ~= Ct, which is
    already the right answer in the high-noise regime and keeps the one-shot
    x0 inversion (which divides by sqrt(alpha_bar_t)) bounded early in
    training.
    """

    def __init__(self, d: int, spec: DenoiserSpec = DenoiserSpec()):
        super().__init__()
        self.d = d
        self.spec = spec
        h0, h1 = spec.hidden
        in_dim = 2 * d if spec.cond_mode == "concat" else d
        self.inp = nn.Linear(in_dim, h0)
        self.time_proj = nn.Linear(spec.time_dim, h0)
        self.cond_proj = nn.Linear(d, h0) if spec.cond_mode == "add" else None
        self.down = nn.Linear(h0, h1)
        self.up = nn.Linear(h1, h0)
        self.out = nn.Linear(h0, d)

    OUT_INIT_SCALE = 1e-3

    def reset_parameters(self, generator: torch.Generator) -> None:
        """Deterministic re-init from an explicit generator (uniform Xavier).

        The output stage is scaled close to zero (but not exactly, so the
        condition path stays observable from the start).
        """
        for module in self.modules():
            if isinstance(module, nn.Linear):
                b = math.sqrt(6.0 / (module.in_features + module.out_features))
                with torch.no_grad():
                    module.weight.uniform_(-b, b, generator=generator)
                    module.bias.zero_()
        with torch.no_grad():
            self.out.weight.mul_(self.OUT_INIT_SCALE)

    def forward(self, ct: torch.Tensor, t: int | torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        if ct.shape != cond.shape:
            raise DataError(f"noisy rows {tuple(ct.shape)} vs condition {tuple(cond.shape)}")
        if ct.shape[1] != self.d:
            raise DataError(f"denoiser built for d={self.d}, got rows of width {ct.shape[1]}")
        if isinstance(t, int):
            t = torch.full((ct.shape[0],), t, dtype=torch.long)
        te = sinusoidal_time_embedding(t, self.spec.time_dim, ct.dtype)
        if self.spec.cond_mode == "concat":
            h0 = self.inp(torch.cat([ct, cond], dim=-1)) + self.time_proj(te)
        else:
            h0 = self.inp(ct) + self.time_proj(te) + self.cond_proj(cond)
        h0 = torch.nn.functional.silu(h0)
        h1 = torch.nn.functional.silu(self.down(h0))
        h2 = torch.nn.functional.silu(self.up(h1))
        return ct + self.out(h2)


def predict_noise(
    denoiser: Denoiser,
    ct: torch.Tensor,
    t: int | torch.Tensor,
    cond: torch.Tensor,
) -> torch.Tensor:
    return denoiser(ct, t, cond)


def noised_reconstruction(
    denoiser: Denoiser,
    c0: torch.Tensor,
    cond: torch.Tensor,
    sched: DiffusionSchedule,
    generator: torch.Generator,
) -> tuple[torch.Tensor, torch.Tensor]:
    """One training pass: corrupt at per-row uniform t, predict the noise.

    Returns (noise-prediction loss, one-shot clean estimate). The estimate
    inverts the forward identity with the predicted noise and stays
    differentiable, so downstream losses can consume it in the same step.
    """
    if not len(c0):
        raise DataError("empty batch")
    t = torch.randint(1, sched.n_steps + 1, (c0.shape[0],), generator=generator)
    eps = torch.empty_like(c0).normal_(generator=generator)
    ct = forward_sample(c0, t, eps, sched)
    eps_hat = denoiser(ct, t, cond)
    loss = torch.mean((eps - eps_hat) ** 2)
    return loss, estimate_x0(ct, t, eps_hat, sched)


def generation_loss(
    denoiser: Denoiser,
    c0: torch.Tensor,
    cond: torch.Tensor,
    sched: DiffusionSchedule,
    generator: torch.Generator,
) -> torch.Tensor:
    """Noise-prediction MSE at a per-row random timestep."""
    return noised_reconstruction(denoiser, c0, cond, sched, generator)[0]


def reverse_sample(
    denoiser: Denoiser,
    cond: torch.Tensor,
    sched: DiffusionSchedule,
    generator: torch.Generator,
) -> torch.Tensor:
    """Ancestral sampling from pure noise down to a clean table.

    Applies c_{t-1} = (c_t - (1-a_t)/sqrt(1-abar_t) * eps_hat) / sqrt(a_t)
    plus sigma_t * z, with z suppressed on the final step.
    """
    c = torch.empty_like(cond).normal_(generator=generator)
    for t in range(sched.n_steps, 0, -1):
        eps_hat = denoiser(c, t, cond)
        alpha = sched.gather("alpha", t, c)
        abar = sched.gather("alpha_bar", t, c)
        c = (c - (1.0 - alpha) / torch.sqrt(1.0 - abar) * eps_hat) / torch.sqrt(alpha)
        if t > 1:
            z = torch.empty_like(c).normal_(generator=generator)
            c = c + sched.gather("sigma", t, c) * z
        if not torch.isfinite(c).all():
            raise NumericalError(f"non-finite rows during reverse sampling at step {t}")
    return c
