"""In-memory asset registry backed by the data root on disk."""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from pathlib import Path

import torch

from ..diffusion import DenoiserModel, load_denoiser
from ..diffusion.denoiser import CHECKPOINT_FORMAT as DENOISER_FORMAT
from ..errors import AssetNotFoundError, ValidationError
from ..zoo import build_builtin_dataset, load_classifier
from ..zoo.classifier import CHECKPOINT_FORMAT as CLASSIFIER_FORMAT, ConvClassifier
from ..zoo.datasets import BUILTIN_NAME, ImageDataset

logger = logging.getLogger(__name__)


@dataclass
class RegisteredModel:
    id: str
    kind: str
    path: Path
    model: object
    meta: dict


class AssetRegistry:
    """Read-mostly registry; registration takes an exclusive lock."""

    def __init__(self, data_root: Path):
        self.data_root = data_root
        self._lock = threading.RLock()
        self._models: dict[str, RegisteredModel] = {}
        self._datasets: dict[str, ImageDataset] = {}

    def bootstrap(self) -> None:
        """Register the builtin dataset plus anything under the data root."""
        self.register_dataset(f"builtin:{BUILTIN_NAME}", build_builtin_dataset())
        models_dir = self.data_root / "models"
        if models_dir.is_dir():
            for path in sorted(models_dir.glob("*.pt")):
                try:
                    self.register_model_file(path, model_id=path.stem)
                except ValidationError as exc:
                    logger.warning("skipping %s: %s", path, exc)
        datasets_dir = self.data_root / "datasets"
        if datasets_dir.is_dir():
            from ..zoo.datasets import load_dataset_archive

            for path in sorted(datasets_dir.glob("*.pt")):
                try:
                    self.register_dataset(path.stem, load_dataset_archive(path))
                except (ValidationError, AssetNotFoundError) as exc:
                    logger.warning("skipping dataset %s: %s", path, exc)

    def register_model_file(self, path: str | Path, model_id: str | None = None) -> RegisteredModel:
        path = Path(path)
        if not path.exists():
            raise AssetNotFoundError(f"checkpoint not found: {path}")
        payload = torch.load(path, map_location="cpu", weights_only=False)
        fmt = payload.get("format") if isinstance(payload, dict) else None
        if fmt == CLASSIFIER_FORMAT:
            model, meta = load_classifier(path)
            kind = "classifier"
            meta = {
                "accuracy": meta["accuracy"],
                "class_names": list(meta["class_names"]),
                "num_classes": model.num_classes,
                "geometry": model.geometry.__dict__,
            }
        elif fmt == DENOISER_FORMAT:
            model = load_denoiser(path)
            kind = "denoiser"
            meta = {
                "num_steps": model.base_schedule().num_steps,
                "geometry": model.geometry.__dict__,
            }
        else:
            raise ValidationError(f"unrecognized checkpoint format in {path}")
        entry = RegisteredModel(
            id=model_id or path.stem, kind=kind, path=path, model=model, meta=meta
        )
        with self._lock:
            self._models[entry.id] = entry
        return entry

    def register_dataset(self, dataset_id: str, dataset: ImageDataset) -> None:
        with self._lock:
            self._datasets[dataset_id] = dataset

    def models(self) -> list[RegisteredModel]:
        with self._lock:
            return list(self._models.values())

    def datasets(self) -> dict[str, ImageDataset]:
        with self._lock:
            return dict(self._datasets)

    def model(self, model_id: str, kind: str | None = None) -> RegisteredModel:
        with self._lock:
            entry = self._models.get(model_id)
        if entry is None:
            raise AssetNotFoundError(f"unknown model {model_id!r}")
        if kind is not None and entry.kind != kind:
            raise AssetNotFoundError(f"model {model_id!r} is a {entry.kind}, expected {kind}")
        return entry

    def classifier(self, model_id: str) -> ConvClassifier:
        return self.model(model_id, kind="classifier").model  # type: ignore[return-value]

    def denoiser(self, model_id: str) -> DenoiserModel:
        return self.model(model_id, kind="denoiser").model  # type: ignore[return-value]

    def dataset(self, dataset_id: str) -> ImageDataset:
        with self._lock:
            ds = self._datasets.get(dataset_id)
        if ds is None:
            raise AssetNotFoundError(f"unknown dataset {dataset_id!r}")
        return ds
