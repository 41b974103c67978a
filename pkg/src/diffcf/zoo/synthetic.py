"""Builtin two-class 32x32 benchmark with a localized class feature.

Each image is a soft background gradient, two class-independent bright dots,
and a colored parabolic stroke in the lower half. The stroke's curvature
sign determines the class (0 opens upward, 1 opens downward), so the
ground-truth region a counterfactual must edit is small and known.
"""

from __future__ import annotations

import numpy as np
import torch

IMAGE_SIZE = 32
CHANNELS = 3


def _stroke(
    canvas: np.ndarray, xs: np.ndarray, ys: np.ndarray, color: np.ndarray, width: float
) -> None:
    h, w = canvas.shape[1:]
    yy, xx = np.mgrid[0:h, 0:w]
    dist2 = np.full((h, w), np.inf)
    for cx, cy in zip(xs, ys):
        dist2 = np.minimum(dist2, (xx - cx) ** 2 + (yy - cy) ** 2)
    intensity = np.exp(-dist2 / (2.0 * width**2))
    canvas += color[:, None, None] * intensity[None, :, :]


def render_curve_image(rng: np.random.Generator, label: int, size: int = IMAGE_SIZE) -> np.ndarray:
    """One sample of the family, as float32 (C, H, W) in [-1, 1]."""
    top = rng.uniform(-0.9, -0.45, size=CHANNELS)
    bottom = top + rng.uniform(0.05, 0.3, size=CHANNELS)
    ramp = np.linspace(0.0, 1.0, size)[None, :, None]
    img = np.zeros((CHANNELS, size, size))
    img += top[:, None, None] + (bottom - top)[:, None, None] * ramp

    eye_y = rng.uniform(8, 12)
    eye_dx = rng.uniform(4.5, 7.0)
    eye_color = rng.uniform(0.5, 0.9, size=CHANNELS)
    cx = size / 2 + rng.uniform(-2, 2)
    for side in (-1, 1):
        _stroke(
            img,
            np.array([cx + side * eye_dx]),
            np.array([eye_y + rng.uniform(-0.5, 0.5)]),
            eye_color,
            width=1.1,
        )

    mouth_y = rng.uniform(20, 25)
    half_w = rng.uniform(6, 9)
    depth = rng.uniform(2.5, 5.0)
    sign = 1.0 if label == 0 else -1.0
    color = rng.uniform(0.55, 0.95, size=CHANNELS)
    ts = np.linspace(-1.0, 1.0, 24)
    xs = cx + ts * half_w
    # label 0 bends down at the edges (opens upward), label 1 the opposite
    ys = mouth_y + sign * depth * (ts**2 - 0.5)
    _stroke(img, xs, ys, color, width=0.9)

    img += rng.normal(0.0, 0.01, size=img.shape)
    return np.clip(img, -1.0, 1.0).astype(np.float32)


def generate_curves(
    count: int, seed: int, size: int = IMAGE_SIZE
) -> tuple[torch.Tensor, torch.Tensor]:
    """Deterministic batch: alternating labels, one RNG stream per call."""
    rng = np.random.default_rng(seed)
    images = np.empty((count, CHANNELS, size, size), dtype=np.float32)
    labels = np.empty(count, dtype=np.int64)
    for i in range(count):
        label = i % 2
        images[i] = render_curve_image(rng, label, size)
        labels[i] = label
    return torch.from_numpy(images), torch.from_numpy(labels)
