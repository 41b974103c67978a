"""Embedding cosine similarity and pairwise perceptual diversity."""

from __future__ import annotations

import logging
from typing import Callable, NamedTuple, Sequence

import numpy as np
import torch

from ..errors import ValidationError
from .encoders import FeatureEncoder

logger = logging.getLogger(__name__)


class SimilarityResult(NamedTuple):
    mean: float
    used_pairs: int
    excluded_pairs: int


def embedding_similarity(
    pairs: Sequence[tuple[torch.Tensor, torch.Tensor]], encoder: FeatureEncoder
) -> SimilarityResult:
    """Mean cos(enc(x), enc(x_ce)) over pairs; zero-norm embeddings excluded."""
    if not pairs:
        raise ValidationError("embedding_similarity needs at least one pair")
    lhs = torch.cat([a if a.ndim == 4 else a[None] for a, _ in pairs])
    rhs = torch.cat([b if b.ndim == 4 else b[None] for _, b in pairs])
    fa = encoder.encode(lhs)
    fb = encoder.encode(rhs)
    na = np.linalg.norm(fa, axis=1)
    nb = np.linalg.norm(fb, axis=1)
    ok = (na > 0) & (nb > 0)
    excluded = int((~ok).sum())
    if excluded:
        logger.warning("embedding_similarity: excluded %d zero-norm pairs", excluded)
    if not ok.any():
        raise ValidationError("every pair had a zero-norm embedding")
    cosines = np.sum(fa[ok] * fb[ok], axis=1) / (na[ok] * nb[ok])
    return SimilarityResult(mean=float(cosines.mean()), used_pairs=int(ok.sum()), excluded_pairs=excluded)


def diversity(
    counterfactuals: Sequence[torch.Tensor],
    distance: Callable[[torch.Tensor, torch.Tensor], float],
) -> float:
    """Mean perceptual distance over all unordered pairs."""
    if len(counterfactuals) < 2:
        raise ValidationError("diversity needs at least 2 counterfactuals")
    values = [
        distance(counterfactuals[i], counterfactuals[j])
        for i in range(len(counterfactuals))
        for j in range(i + 1, len(counterfactuals))
    ]
    return float(np.mean(values))
