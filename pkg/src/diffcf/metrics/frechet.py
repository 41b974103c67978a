"""Frechet distance between Gaussian feature statistics, and the split
protocol that removes the shared-pixel bias of plain FID.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import torch

from ..errors import ValidationError
from .encoders import FeatureEncoder

logger = logging.getLogger(__name__)

# generator(batch) returns one counterfactual (or None on failure) per image
CounterfactualGenerator = Callable[[torch.Tensor], Sequence[torch.Tensor | None]]


@dataclass(frozen=True)
class GaussianStats:
    mean: np.ndarray
    covariance: np.ndarray
    count: int

    def __post_init__(self) -> None:
        d = self.mean.shape[0]
        if self.covariance.shape != (d, d):
            raise ValidationError("covariance shape does not match mean dimension")
        if not np.allclose(self.covariance, self.covariance.T, atol=1e-8):
            raise ValidationError("covariance must be symmetric")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def from_features(cls, features: np.ndarray) -> "GaussianStats":
        if features.ndim != 2 or features.shape[0] < 2:
            raise ValidationError("need at least 2 feature rows to estimate covariance")
        mean = features.mean(axis=0)
        centered = features - mean
        cov = centered.T @ centered / (features.shape[0] - 1)
        cov = (cov + cov.T) / 2.0
        return cls(mean=mean, covariance=cov, count=features.shape[0])


def _sqrtm_psd(matrix: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition, negatives clamped."""
    vals, vecs = np.linalg.eigh(matrix)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}).

    The product-root trace is computed as Tr((A S_b A)^{1/2}) with
    A = S_a^{1/2}, which keeps every eigendecomposition symmetric.
    """
    if a.dim != b.dim:
        raise ValidationError(f"stat dimensions differ: {a.dim} != {b.dim}")
    mean_term = float(np.sum((a.mean - b.mean) ** 2))
    root_a = _sqrtm_psd(a.covariance)
    inner = root_a @ b.covariance @ root_a
    inner = (inner + inner.T) / 2.0
    cross = float(np.sum(np.sqrt(np.clip(np.linalg.eigvalsh(inner), 0.0, None))))
    value = mean_term + float(np.trace(a.covariance) + np.trace(b.covariance)) - 2.0 * cross
    return max(value, 0.0)


def fid(
    set_a: torch.Tensor,
    set_b: torch.Tensor,
    encoder: FeatureEncoder,
    *,
    min_count: int = 2,
    warn_below: int = 16,
) -> float:
    """Encode both sets, fit Gaussians, return their Frechet distance."""
    if set_a.shape[0] < min_count or set_b.shape[0] < min_count:
        raise ValidationError(f"both sets need >= {min_count} images for covariance estimation")
    smallest = min(set_a.shape[0], set_b.shape[0])
    if smallest < warn_below:
        logger.warning("fid: only %d samples; covariance estimate will be noisy", smallest)
    stats_a = GaussianStats.from_features(encoder.encode(set_a))
    stats_b = GaussianStats.from_features(encoder.encode(set_b))
    return frechet_distance(stats_a, stats_b)


def sfid(
    dataset: torch.Tensor,
    generate: CounterfactualGenerator,
    encoder: FeatureEncoder,
    num_splits: int = 10,
    seed: int = 0,
) -> tuple[float, list[float]]:
    """Split FID: counterfactuals of one random half against the raw other half.

    Instances whose generation fails are excluded from the measured side and
    logged; the reported value is the mean over the per-split values.
    """
    n = dataset.shape[0]
    if n < 4:
        raise ValidationError("sfid needs at least 4 images")
    if num_splits < 1:
        raise ValidationError("num_splits must be >= 1")
    rng = np.random.default_rng(seed)
    values: list[float] = []
    for split in range(num_splits):
        perm = rng.permutation(n)
        half = n // 2
        made = generate(dataset[perm[:half]])
        kept = [ce for ce in made if ce is not None]
        dropped = len(made) - len(kept)
        if dropped:
            logger.warning("sfid split %d: excluded %d failed generations", split, dropped)
        if len(kept) < 2:
            raise ValidationError(f"sfid split {split}: fewer than 2 valid counterfactuals")
        ces = torch.cat([ce if ce.ndim == 4 else ce[None] for ce in kept])
        values.append(fid(ces, dataset[perm[half:]], encoder))
    return sum(values) / len(values), values
