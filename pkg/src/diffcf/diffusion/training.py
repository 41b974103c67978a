"""Noise-prediction training for the denoiser."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from ..errors import ValidationError
from .denoiser import DenoiserModel, EpsilonNet, ImageGeometry
from .schedule import build_schedule


@dataclass
class DenoiserTrainConfig:
    num_steps: int = 1000
    schedule_kind: str = "linear"
    train_iterations: int = 2000
    batch_size: int = 64
    learning_rate: float = 2e-4
    base_channels: int = 32
    levels: int | None = None
    seed: int = 0
    # Restrict sampled noise levels to a prefix of the chain; the model then
    # only learns to reconstruct from partially noised inputs, which is all
    # the filter needs for small tau.
    max_train_timestep: int | None = None


@dataclass
class TrainSummary:
    loss_history: list[float] = field(default_factory=list)
    max_t_sampled: int = 0

    def mean_loss(self, first: int | None = None, last: int | None = None) -> float:
        hist = self.loss_history
        if first is not None:
            hist = hist[:first]
        if last is not None:
            hist = hist[-last:]
        return sum(hist) / len(hist)


def train_denoiser(
    images: torch.Tensor, config: DenoiserTrainConfig
) -> tuple[DenoiserModel, TrainSummary]:
    """Fit the noise-prediction net on a stack of images in [-1, 1].

    Returns the trained model bound to its full schedule, plus the loss
    trace and the largest timestep actually sampled.
    """
    if images.ndim != 4 or images.shape[0] == 0:
        raise ValidationError("training images must be a non-empty (N, C, H, W) tensor")
    schedule = build_schedule(config.num_steps, config.schedule_kind)
    max_t = config.max_train_timestep or schedule.num_steps
    if not 1 <= max_t <= schedule.num_steps:
        raise ValidationError(f"max_train_timestep {max_t} outside 1..{schedule.num_steps}")

    torch.manual_seed(config.seed)
    geometry = ImageGeometry(*images.shape[1:])
    net = EpsilonNet(geometry, base_channels=config.base_channels, levels=config.levels)
    net.train()
    opt = torch.optim.Adam(net.parameters(), lr=config.learning_rate)
    gen = torch.Generator().manual_seed(config.seed)

    sqrt_a = torch.tensor(schedule.alpha_bars, dtype=images.dtype).sqrt()
    sqrt_1ma = torch.tensor(1.0 - schedule.alpha_bars, dtype=images.dtype).sqrt()

    summary = TrainSummary()
    n = images.shape[0]
    for _ in range(config.train_iterations):
        idx = torch.randint(0, n, (min(config.batch_size, n),), generator=gen)
        x0 = images[idx]
        t = torch.randint(1, max_t + 1, (x0.shape[0],), generator=gen)
        summary.max_t_sampled = max(summary.max_t_sampled, int(t.max()))
        eps = torch.randn(x0.shape, generator=gen, dtype=x0.dtype)
        coef_a = sqrt_a[t - 1][:, None, None, None]
        coef_e = sqrt_1ma[t - 1][:, None, None, None]
        x_t = coef_a * x0 + coef_e * eps
        loss = F.mse_loss(net(x_t, t), eps)
        opt.zero_grad()
        loss.backward()
        opt.step()
        summary.loss_history.append(float(loss.detach()))

    net.eval()
    return DenoiserModel(net, schedule), summary
