"""Inpainting-style refinement confining edits to the mask.

The pre-explanation is noised to the attack level and denoised back down;
at every level the outside-mask region is replaced by the correspondingly
noised input, so only masked pixels keep the adversarial content. Both
collage operands sit at the same noise level; the step then denoises the
collage one level down. A final clean collage makes the result identical
to the input at every mask-0 pixel, exactly.
"""

from __future__ import annotations

import torch

from ..diffusion.chain import DenoiserFn, denoise_step, forward_diffuse
from ..diffusion.schedule import Schedule
from ..errors import ValidationError
from .mask import Mask


def repaint_refine(
    x: torch.Tensor,
    x_pre: torch.Tensor,
    mask: Mask,
    tau: int,
    model: DenoiserFn,
    schedule: Schedule,
    *,
    seed: int = 0,
) -> torch.Tensor:
    if x.shape != x_pre.shape:
        raise ValidationError("input and pre-explanation shapes differ")
    if x.shape[-2:] != mask.binary.shape:
        raise ValidationError("mask geometry does not match the image")
    if not 0 <= tau <= schedule.num_steps:
        raise ValidationError(f"tau {tau} outside schedule 0..{schedule.num_steps}")

    m = mask.as_image_channels(x.shape[-3]).to(x.dtype)
    if tau == 0:
        return m * x_pre + (1.0 - m) * x

    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        eps = torch.randn(x.shape, generator=gen, dtype=x.dtype)
        x_cur = forward_diffuse(x_pre, tau, eps, schedule)
        for t in range(tau, 0, -1):
            eps = torch.randn(x.shape, generator=gen, dtype=x.dtype)
            x_known = forward_diffuse(x, t, eps, schedule)
            collage = m * x_cur + (1.0 - m) * x_known
            eps = torch.randn(x.shape, generator=gen, dtype=x.dtype)
            x_cur = denoise_step(collage, t, eps, model, schedule)
        return torch.where(mask.binary, x_cur, x)
