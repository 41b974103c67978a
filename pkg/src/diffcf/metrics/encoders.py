"""Feature encoders behind the evaluation metrics.

Every metric that needs image embeddings takes a pluggable encoder; the
desk-scale defaults are the frozen classifier's penultimate features and a
small self-supervised twin-view encoder trained on the data under study.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ValidationError
from ..zoo.classifier import ConvClassifier

TWINVIEW_FORMAT = "diffcf-twinview-v1"


class FeatureEncoder(Protocol):
    tag: str

    @property
    def dim(self) -> int: ...

    def encode(self, images: torch.Tensor) -> np.ndarray: ...


@dataclass
class IdentityEncoder:
    """Flattens pixels; used to bypass learned features in oracle tests."""

    feature_dim: int
    tag: str = "identity"

    @property
    def dim(self) -> int:
        return self.feature_dim

    def encode(self, images: torch.Tensor) -> np.ndarray:
        flat = images.reshape(images.shape[0], -1).detach().cpu().numpy().astype(np.float64)
        if flat.shape[1] != self.feature_dim:
            raise ValidationError(f"expected {self.feature_dim} features, got {flat.shape[1]}")
        return flat


class ClassifierFeatureEncoder:
    """Penultimate features of the frozen classifier."""

    def __init__(self, classifier: ConvClassifier, tag: str = "classifier-features"):
        self.classifier = classifier
        self.tag = tag

    @property
    def dim(self) -> int:
        return self.classifier.head.in_features

    def encode(self, images: torch.Tensor) -> np.ndarray:
        self.classifier.eval()
        with torch.inference_mode():
            feats = self.classifier.features(images)
        return feats.cpu().numpy().astype(np.float64)


class TwinViewEncoder(nn.Module):
    """Conv trunk + projector trained with a stop-gradient twin-view loss."""

    def __init__(self, channels: int, width: int = 32, feature_dim: int = 64):
        super().__init__()
        self.channels = channels
        self.width = width
        self.feature_dim = feature_dim
        self.tag = "self-supervised"
        self.trunk = nn.Sequential(
            nn.Conv2d(channels, width, 3, padding=1),
            nn.GroupNorm(8 if width % 8 == 0 else 1, width),
            nn.SiLU(),
            nn.Conv2d(width, width * 2, 3, stride=2, padding=1),
            nn.GroupNorm(8, width * 2),
            nn.SiLU(),
            nn.Conv2d(width * 2, width * 2, 3, stride=2, padding=1),
            nn.GroupNorm(8, width * 2),
            nn.SiLU(),
        )
        self.projector = nn.Sequential(
            nn.Linear(width * 2, feature_dim), nn.SiLU(), nn.Linear(feature_dim, feature_dim)
        )
        self.predictor = nn.Sequential(
            nn.Linear(feature_dim, feature_dim // 2), nn.SiLU(), nn.Linear(feature_dim // 2, feature_dim)
        )

    @property
    def dim(self) -> int:
        return self.feature_dim

    def project(self, x: torch.Tensor) -> torch.Tensor:
        return self.projector(self.trunk(x).mean(dim=(2, 3)))

    def encode(self, images: torch.Tensor) -> np.ndarray:
        self.eval()
        with torch.inference_mode():
            z = self.project(images)
        return z.cpu().numpy().astype(np.float64)


def _augment(x: torch.Tensor, gen: torch.Generator) -> torch.Tensor:
    n = x.shape[0]
    shifts = torch.randint(-3, 4, (n, 2), generator=gen)
    out = torch.stack(
        [torch.roll(img, shifts=(int(s[0]), int(s[1])), dims=(1, 2)) for img, s in zip(x, shifts)]
    )
    flip = torch.rand(n, generator=gen) < 0.5
    out[flip] = torch.flip(out[flip], dims=(3,))
    gain = 1.0 + 0.2 * (torch.rand(n, 1, 1, 1, generator=gen) - 0.5)
    noise = 0.02 * torch.randn(out.shape, generator=gen)
    return (out * gain + noise).clamp(-1.0, 1.0)


def _neg_cosine(p: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
    return -F.cosine_similarity(p, z.detach(), dim=-1).mean()


def train_twin_view_encoder(
    images: torch.Tensor,
    *,
    steps: int = 300,
    batch_size: int = 64,
    learning_rate: float = 1e-3,
    seed: int = 0,
    width: int = 32,
) -> TwinViewEncoder:
    if images.shape[0] < 2:
        raise ValidationError("self-supervised training needs at least 2 images")
    torch.manual_seed(seed)
    enc = TwinViewEncoder(images.shape[1], width=width)
    opt = torch.optim.Adam(enc.parameters(), lr=learning_rate)
    gen = torch.Generator().manual_seed(seed)
    n = images.shape[0]
    enc.train()
    for _ in range(steps):
        idx = torch.randint(0, n, (min(batch_size, n),), generator=gen)
        x = images[idx]
        v1, v2 = _augment(x, gen), _augment(x, gen)
        z1, z2 = enc.project(v1), enc.project(v2)
        p1, p2 = enc.predictor(z1), enc.predictor(z2)
        loss = 0.5 * (_neg_cosine(p1, z2) + _neg_cosine(p2, z1))
        opt.zero_grad()
        loss.backward()
        opt.step()
    enc.eval()
    return enc


def save_twin_view_encoder(enc: TwinViewEncoder, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "format": TWINVIEW_FORMAT,
            "state_dict": enc.state_dict(),
            "channels": enc.channels,
            "width": enc.width,
            "feature_dim": enc.feature_dim,
        },
        path,
    )


def load_twin_view_encoder(path: str | Path) -> TwinViewEncoder:
    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    if payload.get("format") != TWINVIEW_FORMAT:
        raise ValidationError(f"not a twin-view encoder checkpoint: {path}")
    enc = TwinViewEncoder(payload["channels"], width=payload["width"], feature_dim=payload["feature_dim"])
    enc.load_state_dict(payload["state_dict"])
    enc.eval()
    return enc


class CosineFeatureDistance:
    """Perceptual distance 1 - cos(f(a), f(b)); zero for identical images."""

    def __init__(self, encoder: FeatureEncoder):
        self.encoder = encoder

    def __call__(self, a: torch.Tensor, b: torch.Tensor) -> float:
        fa = self.encoder.encode(a if a.ndim == 4 else a[None])[0]
        fb = self.encoder.encode(b if b.ndim == 4 else b[None])[0]
        if np.array_equal(fa, fb):
            return 0.0
        na, nb = np.linalg.norm(fa), np.linalg.norm(fb)
        if na == 0.0 or nb == 0.0:
            raise ValidationError("zero-norm embedding in perceptual distance")
        return max(float(1.0 - np.dot(fa, fb) / (na * nb)), 0.0)
