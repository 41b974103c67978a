"""Region-of-change mask from the input/pre-explanation difference.

Four steps: channel-summed absolute difference, normalization by the global
maximum, grayscale dilation with a square max-filter, threshold into {0, 1}.
A pixel is eligible for modification iff its dilated normalized magnitude
reaches the threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from ..errors import ValidationError


@dataclass
class Mask:
    binary: torch.Tensor  # bool, (H, W)
    raw_magnitude: torch.Tensor  # float, (H, W), channel-summed |x - x_pre|
    dilation_size: int
    threshold: float

    @property
    def coverage(self) -> float:
        return float(self.binary.float().mean())

    def as_image_channels(self, channels: int) -> torch.Tensor:
        """Broadcast to (1, C, H, W) floats for collage arithmetic."""
        return self.binary.to(torch.float32).expand(1, channels, *self.binary.shape)


def grey_dilate(magnitude: torch.Tensor, size: int) -> torch.Tensor:
    """Square max-filter; windows are clipped at the image border."""
    if size == 1:
        return magnitude
    pad = size // 2
    padded = F.pad(magnitude[None, None], (pad, pad, pad, pad), value=float("-inf"))
    return F.max_pool2d(padded, kernel_size=size, stride=1)[0, 0]


def compute_mask(
    x: torch.Tensor, x_pre: torch.Tensor, dilation: int, threshold: float
) -> Mask:
    if x.shape != x_pre.shape:
        raise ValidationError("input and pre-explanation shapes differ")
    if dilation < 1 or dilation % 2 == 0:
        raise ValidationError("dilation size must be an odd positive integer")
    if not 0.0 <= threshold <= 1.0:
        raise ValidationError("threshold must be in [0, 1]")

    magnitude = (x - x_pre).abs().sum(dim=-3)
    if magnitude.ndim == 3:
        if magnitude.shape[0] != 1:
            raise ValidationError("compute_mask expects a single image")
        magnitude = magnitude[0]
    peak = magnitude.max()
    if float(peak) == 0.0:
        # Degenerate zero-difference rule: nothing qualifies for change.
        binary = torch.zeros_like(magnitude, dtype=torch.bool)
        return Mask(binary=binary, raw_magnitude=magnitude, dilation_size=dilation, threshold=threshold)
    normalized = magnitude / peak
    dilated = grey_dilate(normalized, dilation)
    binary = dilated >= threshold
    return Mask(binary=binary, raw_magnitude=magnitude, dilation_size=dilation, threshold=threshold)
