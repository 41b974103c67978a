"""Forward and reverse chain operations, and the round-trip filter.

The filter noises an image to an intermediate level and denoises it back,
which strips high-frequency content while staying close to the input. Every
step is differentiable with respect to the image, so attack gradients pass
through the whole round trip.
"""

from __future__ import annotations

import math
from typing import Callable

import torch

from ..errors import ValidationError
from .denoiser import DenoiserOutput
from .schedule import Schedule

# Denoiser-like: callable (batched image, 1-based timestep) -> DenoiserOutput.
DenoiserFn = Callable[[torch.Tensor, int], DenoiserOutput]


def forward_diffuse(x0: torch.Tensor, t: int, eps: torch.Tensor, schedule: Schedule) -> torch.Tensor:
    """Jump the forward chain to level t: sqrt(a_bar)*x0 + sqrt(1-a_bar)*eps.

    Pure function; the caller supplies the noise draw.
    """
    if eps.shape != x0.shape:
        raise ValidationError(f"noise shape {tuple(eps.shape)} != image shape {tuple(x0.shape)}")
    schedule.validate_t(t)
    a_bar = schedule.alpha_bar(t)
    return math.sqrt(a_bar) * x0 + math.sqrt(1.0 - a_bar) * eps


def denoise_step(
    x_t: torch.Tensor, t: int, eps: torch.Tensor, model: DenoiserFn, schedule: Schedule
) -> torch.Tensor:
    """One reverse step: mu + sigma*eps, with the noise suppressed at t=1."""
    if eps.shape != x_t.shape:
        raise ValidationError(f"noise shape {tuple(eps.shape)} != image shape {tuple(x_t.shape)}")
    schedule.validate_t(t)
    out = model(x_t, t)
    if t == 1:
        return out.mu
    return out.mu + out.sigma * eps


def _make_generator(seed: int | None, generator: torch.Generator | None) -> torch.Generator:
    if generator is not None:
        if seed is not None:
            raise ValidationError("pass either seed or generator, not both")
        return generator
    gen = torch.Generator()
    gen.manual_seed(0 if seed is None else seed)
    return gen


def filter_image(
    x: torch.Tensor,
    tau: int,
    model: DenoiserFn,
    schedule: Schedule,
    *,
    seed: int | None = None,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Noise x up to level tau, then denoise back down to 0.

    tau=0 is the identity. Noise draws come from the seeded generator, so a
    fixed seed makes the whole round trip deterministic (and therefore a
    fixed-noise objective differentiable-checkable).
    """
    if tau == 0:
        return x
    if not 0 <= tau <= schedule.num_steps:
        raise ValidationError(f"tau {tau} outside schedule 0..{schedule.num_steps}")
    gen = _make_generator(seed, generator)
    eps = torch.randn(x.shape, generator=gen, dtype=x.dtype)
    x_t = forward_diffuse(x, tau, eps, schedule)
    for t in range(tau, 0, -1):
        eps = torch.randn(x.shape, generator=gen, dtype=x.dtype)
        x_t = denoise_step(x_t, t, eps, model, schedule)
    return x_t
