"""The frozen classifier under explanation, and its desk-scale trainer.

The classifier is a read-only asset downstream: explanation never touches
its weights, it only differentiates through it.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..diffusion.denoiser import ImageGeometry
from ..errors import ValidationError

CHECKPOINT_FORMAT = "diffcf-classifier-v1"


class ConvClassifier(nn.Module):
    """Small CNN: three conv stages, global pooling, linear head."""

    def __init__(self, geometry: ImageGeometry, num_classes: int, width: int = 32):
        super().__init__()
        if num_classes < 2:
            raise ValidationError("classifier needs at least 2 classes")
        self.geometry = geometry
        self.num_classes = num_classes
        self.width = width
        self.backbone = nn.Sequential(
            nn.Conv2d(geometry.channels, width, 3, padding=1),
            nn.GroupNorm(8 if width % 8 == 0 else 1, width),
            nn.SiLU(),
            nn.Conv2d(width, width * 2, 3, stride=2, padding=1),
            nn.GroupNorm(8 if width % 4 == 0 else 1, width * 2),
            nn.SiLU(),
            nn.Conv2d(width * 2, width * 2, 3, stride=2, padding=1),
            nn.GroupNorm(8 if width % 4 == 0 else 1, width * 2),
            nn.SiLU(),
        )
        self.head = nn.Linear(width * 2, num_classes)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        return self.backbone(x).mean(dim=(2, 3))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1:] != self.geometry.shape:
            raise ValidationError(
                f"input shape {tuple(x.shape)} does not match geometry {self.geometry.shape}"
            )
        return self.head(self.features(x))


@dataclass
class ClassifierTrainConfig:
    epochs: int = 8
    batch_size: int = 64
    learning_rate: float = 1e-3
    width: int = 32
    seed: int = 0


def predict_probs(classifier: nn.Module, batch: torch.Tensor) -> torch.Tensor:
    """Softmax class probabilities; rows sum to 1."""
    classifier.eval()
    with torch.inference_mode():
        logits = classifier(batch)
    return torch.softmax(logits, dim=-1)


def train_classifier(
    images: torch.Tensor,
    labels: torch.Tensor,
    val_images: torch.Tensor,
    val_labels: torch.Tensor,
    config: ClassifierTrainConfig,
) -> tuple[ConvClassifier, float]:
    """Train on the given split and report held-out accuracy."""
    if images.shape[0] == 0:
        raise ValidationError("empty training set")
    num_classes = int(labels.max()) + 1 if labels.numel() else 0
    if num_classes < 2:
        raise ValidationError("training set must contain at least 2 classes")

    torch.manual_seed(config.seed)
    geometry = ImageGeometry(*images.shape[1:])
    model = ConvClassifier(geometry, num_classes, width=config.width)
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    gen = torch.Generator().manual_seed(config.seed)

    n = images.shape[0]
    model.train()
    for _ in range(config.epochs):
        order = torch.randperm(n, generator=gen)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss = F.cross_entropy(model(images[idx]), labels[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
    model.eval()

    preds = predict_probs(model, val_images).argmax(dim=-1)
    accuracy = float((preds == val_labels).float().mean())
    return model, accuracy


def save_classifier(
    model: ConvClassifier, path: str | Path, *, accuracy: float, class_names: tuple[str, ...] | None = None
) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "state_dict": model.state_dict(),
        "geometry": {
            "channels": model.geometry.channels,
            "height": model.geometry.height,
            "width": model.geometry.width,
        },
        "num_classes": model.num_classes,
        "width": model.width,
        "accuracy": accuracy,
        "class_names": list(class_names or ()),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_classifier(path: str | Path) -> tuple[ConvClassifier, dict]:
    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValidationError(f"not a classifier checkpoint: {path}")
    geometry = ImageGeometry(**payload["geometry"])
    model = ConvClassifier(geometry, payload["num_classes"], width=payload["width"])
    model.load_state_dict(payload["state_dict"])
    model.eval()
    meta = {"accuracy": payload["accuracy"], "class_names": tuple(payload["class_names"])}
    return model, meta
