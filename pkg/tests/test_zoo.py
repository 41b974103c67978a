from __future__ import annotations

import csv
import math

import numpy as np
import pytest
import torch
from PIL import Image

from diffcf.errors import IngestionError, ValidationError
from diffcf.zoo import (
    ClassifierTrainConfig,
    build_builtin_dataset,
    generate_curves,
    ingest_dataset,
    load_classifier,
    predict_probs,
    save_classifier,
    train_classifier,
)
from diffcf.zoo.classifier import ConvClassifier
from diffcf.diffusion.denoiser import ImageGeometry


@pytest.fixture(scope="module")
def tiny_dataset():
    return build_builtin_dataset({"train": 512, "val": 128, "eval": 32}, seed=3)


@pytest.fixture(scope="module")
def trained_classifier(tiny_dataset):
    tr_x, tr_y = tiny_dataset.split("train")
    va_x, va_y = tiny_dataset.split("val")
    model, acc = train_classifier(
        tr_x, tr_y, va_x, va_y, ClassifierTrainConfig(epochs=20, seed=0)
    )
    return model, acc


def test_builtin_dataset_shapes_and_splits(tiny_dataset):
    ds = tiny_dataset
    assert ds.images.shape == (672, 3, 32, 32)
    assert ds.images.min() >= -1.0 and ds.images.max() <= 1.0
    all_idx = np.concatenate([ds.splits[k] for k in ("train", "val", "eval")])
    assert len(set(all_idx.tolist())) == len(all_idx)
    assert ds.descriptor.num_classes == 2


def test_builtin_dataset_is_seed_deterministic():
    a, la = generate_curves(8, seed=42)
    b, lb = generate_curves(8, seed=42)
    c, _ = generate_curves(8, seed=43)
    assert torch.equal(a, b) and torch.equal(la, lb)
    assert not torch.equal(a, c)


def test_classifier_accuracy_on_builtin(trained_classifier):
    _, acc = trained_classifier
    assert acc >= 0.95


def test_classifier_retrain_reproducible(tiny_dataset):
    tr_x, tr_y = tiny_dataset.split("train")
    va_x, va_y = tiny_dataset.split("val")
    cfg = ClassifierTrainConfig(epochs=1, seed=9)
    _, acc_a = train_classifier(tr_x[:128], tr_y[:128], va_x, va_y, cfg)
    _, acc_b = train_classifier(tr_x[:128], tr_y[:128], va_x, va_y, cfg)
    assert acc_a == acc_b


def test_single_class_rejected(tiny_dataset):
    tr_x, _ = tiny_dataset.split("train")
    zeros = torch.zeros(len(tr_x), dtype=torch.int64)
    with pytest.raises(ValidationError):
        train_classifier(tr_x, zeros, tr_x[:4], zeros[:4], ClassifierTrainConfig(epochs=1))


def test_empty_dataset_rejected():
    empty = torch.zeros(0, 3, 32, 32)
    labels = torch.zeros(0, dtype=torch.int64)
    with pytest.raises(ValidationError):
        train_classifier(empty, labels, empty, labels, ClassifierTrainConfig())


def test_predict_probs_rows_sum_to_one(trained_classifier, tiny_dataset):
    model, _ = trained_classifier
    ev_x, _ = tiny_dataset.split("eval")
    probs = predict_probs(model, ev_x[:16])
    assert torch.allclose(probs.sum(dim=-1), torch.ones(16), atol=1e-6)


def test_predict_probs_uniform_for_equal_logits():
    class Flat(torch.nn.Module):
        def forward(self, x):
            return torch.zeros(x.shape[0], 4)

    probs = predict_probs(Flat(), torch.zeros(3, 1, 2, 2))
    assert torch.allclose(probs, torch.full((3, 4), 0.25))


def test_predict_probs_scalar_softmax_oracle():
    # softmax([2, 0]) computed independently.
    class TwoLogits(torch.nn.Module):
        def forward(self, x):
            return torch.tensor([[2.0, 0.0]])

    probs = predict_probs(TwoLogits(), torch.zeros(1, 1, 2, 2))
    z = math.exp(2.0) + 1.0
    assert probs[0, 0].item() == pytest.approx(math.exp(2.0) / z, abs=1e-4)
    assert probs[0, 0].item() == pytest.approx(0.8808, abs=1e-4)
    assert probs[0, 1].item() == pytest.approx(0.1192, abs=1e-4)


def test_predict_probs_geometry_mismatch(trained_classifier):
    model, _ = trained_classifier
    with pytest.raises(ValidationError):
        predict_probs(model, torch.zeros(1, 3, 16, 16))


def test_classifier_checkpoint_round_trip(tmp_path, trained_classifier, tiny_dataset):
    model, acc = trained_classifier
    ev_x, _ = tiny_dataset.split("eval")
    before = predict_probs(model, ev_x[:8])
    path = tmp_path / "clf.pt"
    save_classifier(model, path, accuracy=acc, class_names=("upward", "downward"))
    loaded, meta = load_classifier(path)
    after = predict_probs(loaded, ev_x[:8])
    assert torch.equal(before, after)
    assert meta["accuracy"] == acc


def test_classifier_rejects_single_class_config():
    with pytest.raises(ValidationError):
        ConvClassifier(ImageGeometry(3, 32, 32), num_classes=1)


def _write_png(path, rng, size=(16, 16)):
    arr = rng.integers(0, 256, size=(size[0], size[1], 3), dtype=np.uint8)
    Image.fromarray(arr).save(path)
    return arr


def _write_manifest(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filename", "label"])
        writer.writerows(rows)


def test_ingest_clean_directory(tmp_path):
    rng = np.random.default_rng(0)
    rows = []
    for i in range(20):
        name = f"img_{i:03d}.png"
        _write_png(tmp_path / name, rng)
        rows.append([name, "a" if i % 2 else "b"])
    manifest = tmp_path / "labels.csv"
    _write_manifest(manifest, rows)
    ds = ingest_dataset(tmp_path, manifest, seed=1)
    assert len(ds.images) == 20
    assert ds.descriptor.provenance == "ingested-directory"
    assert ds.descriptor.class_names == ("a", "b")
    assert ds.images.min() >= -1.0 and ds.images.max() <= 1.0
    assert sum(ds.descriptor.split_sizes.values()) == 20


def test_ingest_strict_names_offender(tmp_path):
    rng = np.random.default_rng(0)
    rows = []
    for i in range(5):
        name = f"img_{i}.png"
        _write_png(tmp_path / name, rng)
        rows.append([name, "x" if i % 2 else "y"])
    (tmp_path / "broken.png").write_bytes(b"not a png")
    rows.append(["broken.png", "x"])
    manifest = tmp_path / "labels.csv"
    _write_manifest(manifest, rows)
    with pytest.raises(IngestionError) as exc:
        ingest_dataset(tmp_path, manifest, strict=True)
    assert any("broken.png" in line for line in exc.value.report)


def test_ingest_lenient_drops_offender(tmp_path):
    rng = np.random.default_rng(0)
    rows = []
    for i in range(6):
        name = f"img_{i}.png"
        _write_png(tmp_path / name, rng)
        rows.append([name, "x" if i % 2 else "y"])
    (tmp_path / "bad.png").write_bytes(b"junk")
    rows.append(["bad.png", "y"])
    manifest = tmp_path / "labels.csv"
    _write_manifest(manifest, rows)
    ds = ingest_dataset(tmp_path, manifest, strict=False)
    assert len(ds.images) == 6
