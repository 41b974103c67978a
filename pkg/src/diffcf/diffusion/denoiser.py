"""Noise-prediction network and the mean/deviation wrapper around it.

The network predicts the noise added by the forward chain; the wrapper turns
that prediction into the reverse-step mean and per-pixel deviation for the
schedule it is bound to. Gradients flow from both outputs back to the input
image, which the attack loop relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from ..errors import ValidationError
from .schedule import NoiseSchedule, RespacedSchedule, Schedule

CHECKPOINT_FORMAT = "diffcf-denoiser-v1"


@dataclass(frozen=True)
class ImageGeometry:
    channels: int
    height: int
    width: int

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.channels, self.height, self.width)


@dataclass
class DenoiserOutput:
    """Reverse-step mean and per-pixel deviation, same shape as the input."""

    mu: torch.Tensor
    sigma: torch.Tensor


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal embedding of (original-chain) timestep indices."""
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / half)
    args = t.double()[:, None] * freqs[None, :]
    emb = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
    return emb


def _groups(ch: int) -> int:
    for g in (8, 4, 2):
        if ch % g == 0:
            return g
    return 1


class _ResBlock(nn.Module):
    def __init__(self, ch_in: int, ch_out: int, emb_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(_groups(ch_in), ch_in)
        self.conv1 = nn.Conv2d(ch_in, ch_out, 3, padding=1)
        self.emb_proj = nn.Linear(emb_dim, ch_out)
        self.norm2 = nn.GroupNorm(_groups(ch_out), ch_out)
        self.conv2 = nn.Conv2d(ch_out, ch_out, 3, padding=1)
        self.skip = nn.Conv2d(ch_in, ch_out, 1) if ch_in != ch_out else nn.Identity()
        self.act = nn.SiLU()

    def forward(self, x: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(self.act(self.norm1(x)))
        h = h + self.emb_proj(emb)[:, :, None, None]
        h = self.conv2(self.act(self.norm2(h)))
        return h + self.skip(x)


class EpsilonNet(nn.Module):
    """Small UNet predicting forward-chain noise from (x_t, t).

    Depth adapts to the image size: each level halves the spatial extent,
    so 32x32 images get two downsamplings and a 4x4 toy stays at one level.
    """

    def __init__(self, geometry: ImageGeometry, base_channels: int = 32, levels: int | None = None):
        super().__init__()
        if levels is None:
            levels = max(1, min(3, int(math.log2(min(geometry.height, geometry.width))) - 2))
        self.geometry = geometry
        self.base_channels = base_channels
        self.levels = levels
        emb_dim = base_channels * 4
        self.emb_mlp = nn.Sequential(
            nn.Linear(base_channels, emb_dim), nn.SiLU(), nn.Linear(emb_dim, emb_dim)
        )
        self.stem = nn.Conv2d(geometry.channels, base_channels, 3, padding=1)

        chans = [base_channels * (2 ** min(i, 1)) for i in range(levels)]
        self.down_blocks = nn.ModuleList()
        self.downsamplers = nn.ModuleList()
        ch = base_channels
        for i, ch_out in enumerate(chans):
            self.down_blocks.append(_ResBlock(ch, ch_out, emb_dim))
            ch = ch_out
            if i < levels - 1:
                self.downsamplers.append(nn.Conv2d(ch, ch, 3, stride=2, padding=1))
        self.middle = _ResBlock(ch, ch, emb_dim)
        self.up_blocks = nn.ModuleList()
        self.upsamplers = nn.ModuleList()
        for i in reversed(range(levels)):
            ch_skip = chans[i]
            self.up_blocks.append(_ResBlock(ch + ch_skip, ch_skip, emb_dim))
            ch = ch_skip
            if i > 0:
                self.upsamplers.append(nn.Upsample(scale_factor=2, mode="nearest"))
        self.head_norm = nn.GroupNorm(_groups(ch), ch)
        self.head = nn.Conv2d(ch, geometry.channels, 3, padding=1)
        self.act = nn.SiLU()

    def forward(self, x: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        emb = timestep_embedding(t, self.base_channels).to(x.dtype)
        emb = self.emb_mlp(emb)
        h = self.stem(x)
        skips = []
        for i, block in enumerate(self.down_blocks):
            h = block(h, emb)
            skips.append(h)
            if i < len(self.down_blocks) - 1:
                h = self.downsamplers[i](h)
        h = self.middle(h, emb)
        for i, block in enumerate(self.up_blocks):
            h = block(torch.cat([h, skips[-(i + 1)]], dim=1), emb)
            if i < len(self.upsamplers):
                h = self.upsamplers[i](h)
        return self.head(self.act(self.head_norm(h)))


class DenoiserModel:
    """Callable (image, timestep) -> DenoiserOutput, bound to a schedule.

    ``t`` is a 1-based position in the bound schedule; the network itself is
    always conditioned on the original-chain index, so the same weights serve
    the full chain and any respacing of it.
    """

    def __init__(self, net: EpsilonNet, schedule: Schedule):
        self.net = net
        self.schedule = schedule
        self.net.eval()

    @property
    def geometry(self) -> ImageGeometry:
        return self.net.geometry

    def with_schedule(self, schedule: Schedule) -> "DenoiserModel":
        return DenoiserModel(self.net, schedule)

    def base_schedule(self) -> NoiseSchedule:
        sched = self.schedule
        return sched.base if isinstance(sched, RespacedSchedule) else sched

    def predict_eps(self, x: torch.Tensor, t: int) -> torch.Tensor:
        t_orig = torch.full((x.shape[0],), self.schedule.original_index(t), dtype=torch.long)
        return self.net(x, t_orig)

    def __call__(self, x: torch.Tensor, t: int) -> DenoiserOutput:
        if x.ndim != 4 or x.shape[1:] != self.geometry.shape:
            raise ValidationError(f"input shape {tuple(x.shape)} does not match geometry {self.geometry.shape}")
        sched = self.schedule
        sched.validate_t(t)
        eps = self.predict_eps(x, t)
        a_bar = sched.alpha_bar(t)
        alpha = sched.alpha(t)
        mu = (x - (1.0 - alpha) / math.sqrt(1.0 - a_bar) * eps) / math.sqrt(alpha)
        sigma = torch.full_like(x, sched.posterior_sigma(t))
        return DenoiserOutput(mu=mu, sigma=sigma)


def save_denoiser(model: DenoiserModel, path: str | Path) -> None:
    """Write a single archive with weights, schedule constants, and geometry."""
    net = model.net
    base = model.base_schedule()
    payload = {
        "format": CHECKPOINT_FORMAT,
        "state_dict": net.state_dict(),
        "arch": {"base_channels": net.base_channels, "levels": net.levels},
        "geometry": {"channels": net.geometry.channels, "height": net.geometry.height, "width": net.geometry.width},
        "schedule": {"num_steps": base.num_steps, "betas": base.betas},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_denoiser(path: str | Path) -> DenoiserModel:
    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValidationError(f"not a denoiser checkpoint: {path}")
    geometry = ImageGeometry(**payload["geometry"])
    net = EpsilonNet(geometry, **payload["arch"])
    net.load_state_dict(payload["state_dict"])
    net.eval()
    betas = payload["schedule"]["betas"]
    alpha_bars = np.cumprod(1.0 - betas)
    schedule = NoiseSchedule(betas=betas, alpha_bars=alpha_bars)
    return DenoiserModel(net, schedule)
