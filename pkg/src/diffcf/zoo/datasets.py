"""Dataset container, the builtin benchmark, and directory ingestion."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from ..errors import IngestionError, ValidationError
from .synthetic import CHANNELS, IMAGE_SIZE, generate_curves

logger = logging.getLogger(__name__)

BUILTIN_NAME = "curves32"
BUILTIN_SPLITS = {"train": 2048, "val": 256, "eval": 512}
BUILTIN_SEED = 20240501

ARCHIVE_FORMAT = "diffcf-dataset-v1"


@dataclass(frozen=True)
class DatasetDescriptor:
    name: str
    channels: int
    height: int
    width: int
    class_names: tuple[str, ...]
    split_sizes: dict[str, int]
    provenance: str  # "builtin-synthetic" | "ingested-directory"

    @property
    def num_classes(self) -> int:
        return len(self.class_names)


@dataclass
class ImageDataset:
    descriptor: DatasetDescriptor
    images: torch.Tensor
    labels: torch.Tensor
    splits: dict[str, np.ndarray] = field(default_factory=dict)

    def split(self, name: str) -> tuple[torch.Tensor, torch.Tensor]:
        if name not in self.splits:
            raise ValidationError(f"unknown split {name!r}; have {sorted(self.splits)}")
        idx = self.splits[name]
        return self.images[idx], self.labels[idx]

    def instance(self, split: str, index: int) -> tuple[torch.Tensor, int]:
        images, labels = self.split(split)
        if not 0 <= index < len(images):
            raise ValidationError(f"index {index} outside split {split!r} of size {len(images)}")
        return images[index], int(labels[index])


_BUILTIN_CACHE: dict[tuple, ImageDataset] = {}


def build_builtin_dataset(
    split_sizes: dict[str, int] | None = None, seed: int = BUILTIN_SEED
) -> ImageDataset:
    """Generate the curvature benchmark with disjoint, seeded splits.

    Repeated calls with the same arguments return one cached instance;
    treat its tensors as read-only.
    """
    sizes = dict(BUILTIN_SPLITS if split_sizes is None else split_sizes)
    cache_key = (tuple(sorted(sizes.items())), seed)
    if cache_key in _BUILTIN_CACHE:
        return _BUILTIN_CACHE[cache_key]
    total = sum(sizes.values())
    images, labels = generate_curves(total, seed)
    descriptor = DatasetDescriptor(
        name=BUILTIN_NAME,
        channels=CHANNELS,
        height=IMAGE_SIZE,
        width=IMAGE_SIZE,
        class_names=("upward", "downward"),
        split_sizes=sizes,
        provenance="builtin-synthetic",
    )
    splits: dict[str, np.ndarray] = {}
    start = 0
    for name, size in sizes.items():
        splits[name] = np.arange(start, start + size)
        start += size
    dataset = ImageDataset(descriptor=descriptor, images=images, labels=labels, splits=splits)
    _BUILTIN_CACHE[cache_key] = dataset
    return dataset


def image_to_unit_range(arr: np.ndarray) -> np.ndarray:
    """uint8 (H, W, C) -> float32 (C, H, W) in [-1, 1]."""
    chw = arr.astype(np.float32).transpose(2, 0, 1)
    return chw / 255.0 * 2.0 - 1.0


def save_dataset_archive(dataset: ImageDataset, path: str | Path) -> None:
    """Single-file archive: tensors, splits, and the descriptor."""
    d = dataset.descriptor
    payload = {
        "format": ARCHIVE_FORMAT,
        "images": dataset.images,
        "labels": dataset.labels,
        "splits": {k: torch.from_numpy(v.copy()) for k, v in dataset.splits.items()},
        "descriptor": {
            "name": d.name,
            "channels": d.channels,
            "height": d.height,
            "width": d.width,
            "class_names": list(d.class_names),
            "split_sizes": d.split_sizes,
            "provenance": d.provenance,
        },
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_dataset_archive(path: str | Path) -> ImageDataset:
    from ..errors import AssetNotFoundError

    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    if payload.get("format") != ARCHIVE_FORMAT:
        raise AssetNotFoundError(f"not a dataset archive: {path}")
    desc = payload["descriptor"]
    descriptor = DatasetDescriptor(
        name=desc["name"],
        channels=desc["channels"],
        height=desc["height"],
        width=desc["width"],
        class_names=tuple(desc["class_names"]),
        split_sizes=desc["split_sizes"],
        provenance=desc["provenance"],
    )
    return ImageDataset(
        descriptor=descriptor,
        images=payload["images"],
        labels=payload["labels"],
        splits={k: v.numpy() for k, v in payload["splits"].items()},
    )


def ingest_dataset(
    directory: str | Path,
    manifest: str | Path,
    *,
    strict: bool = True,
    split_fractions: tuple[float, float] = (0.8, 0.1),
    seed: int = 0,
) -> ImageDataset:
    """Load a PNG directory plus a (filename, label) CSV manifest.

    Strict mode fails on the first complete scan if any file is unreadable,
    mislabeled, or geometry-mismatched; lenient mode drops offenders with a
    logged warning. Splits are materialized from a fixed seed.
    """
    directory = Path(directory)
    rows: list[tuple[str, str]] = []
    errors: list[str] = []
    with open(manifest, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() == "filename":
                continue
            if len(row) < 2 or not row[1].strip():
                errors.append(f"{row[0].strip() if row else '<empty>'}: missing label")
                continue
            rows.append((row[0].strip(), row[1].strip()))
    if not rows and not errors:
        raise ValidationError("manifest lists no images")

    loaded: list[np.ndarray] = []
    labels: list[str] = []
    geometry: tuple[int, int, int] | None = None
    for filename, label in rows:
        path = directory / filename
        try:
            with Image.open(path) as im:
                arr = np.asarray(im.convert("RGB"))
        except Exception as exc:  # noqa: BLE001 - itemized into the report
            errors.append(f"{filename}: unreadable ({exc})")
            continue
        shape = (arr.shape[2], arr.shape[0], arr.shape[1])
        if geometry is None:
            geometry = shape
        elif shape != geometry:
            errors.append(f"{filename}: geometry {shape} != {geometry}")
            continue
        loaded.append(image_to_unit_range(arr))
        labels.append(label)

    if errors and strict:
        raise IngestionError(f"{len(errors)} ingestion errors (strict mode)", report=errors)
    for line in errors:
        logger.warning("ingest: skipped %s", line)
    if not loaded:
        raise ValidationError("no readable images after ingestion")

    class_names = tuple(sorted(set(labels)))
    label_ids = torch.tensor([class_names.index(lb) for lb in labels], dtype=torch.int64)
    images = torch.from_numpy(np.stack(loaded))

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(loaded))
    n_train = int(round(split_fractions[0] * len(loaded)))
    n_val = int(round(split_fractions[1] * len(loaded)))
    splits = {
        "train": order[:n_train],
        "val": order[n_train : n_train + n_val],
        "eval": order[n_train + n_val :],
    }
    descriptor = DatasetDescriptor(
        name=directory.name,
        channels=geometry[0],
        height=geometry[1],
        width=geometry[2],
        class_names=class_names,
        split_sizes={k: len(v) for k, v in splits.items()},
        provenance="ingested-directory",
    )
    return ImageDataset(descriptor=descriptor, images=images, labels=label_ids, splits=splits)
