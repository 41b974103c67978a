"""Acceptance suite: every exit criterion at its stated tolerance.

Benchmark assets (classifier + denoiser on the builtin 32x32 set) are
trained once and cached under tests/.asset-cache; training is seeded, so
cached and freshly trained checkpoints are interchangeable.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest
import torch

from diffcf.diffusion import (
    DenoiserModel,
    DenoiserTrainConfig,
    EpsilonNet,
    ImageGeometry,
    build_schedule,
    filter_image,
    forward_diffuse,
    load_denoiser,
    respace,
    save_denoiser,
    train_denoiser,
)
from diffcf.engine import (
    AttackConfig,
    RefineConfig,
    compute_mask,
    diverse_explanations,
    explain,
    total_objective,
    write_run_dir,
)
from diffcf.engine.runio import canonical_manifest, read_run_dir
from diffcf.metrics import GaussianStats, IdentityEncoder, cout, fid, frechet_distance, sfid
from diffcf.zoo import (
    ClassifierTrainConfig,
    build_builtin_dataset,
    load_classifier,
    predict_probs,
    save_classifier,
    train_classifier,
)

CACHE_DIR = Path(os.environ.get("DIFFCF_TEST_ASSET_CACHE", Path(__file__).parent / ".asset-cache"))
EVAL_COUNT = 200
WORKERS = 2


@dataclass
class Bench:
    dataset: object
    classifier: torch.nn.Module
    accuracy: float
    model: DenoiserModel


@pytest.fixture(scope="session")
def bench() -> Bench:
    CACHE_DIR.mkdir(parents=True, exist_ok=True)
    dataset = build_builtin_dataset()
    clf_path = CACHE_DIR / "bench-classifier-v1.pt"
    dd_path = CACHE_DIR / "bench-denoiser-v1.pt"

    if not clf_path.exists():
        tr_x, tr_y = dataset.split("train")
        va_x, va_y = dataset.split("val")
        model, accuracy = train_classifier(
            tr_x, tr_y, va_x, va_y, ClassifierTrainConfig(epochs=10, seed=0)
        )
        save_classifier(model, clf_path, accuracy=accuracy, class_names=dataset.descriptor.class_names)
    classifier, meta = load_classifier(clf_path)
    assert meta["accuracy"] >= 0.9, "benchmark classifier below the downstream gate"

    if not dd_path.exists():
        tr_x, _ = dataset.split("train")
        model, _ = train_denoiser(tr_x, DenoiserTrainConfig(train_iterations=1500, seed=0))
        save_denoiser(model, dd_path)
    model = load_denoiser(dd_path)
    return Bench(dataset=dataset, classifier=classifier, accuracy=meta["accuracy"], model=model)


def _run_batch(bench: Bench, attack_base: AttackConfig, count: int = EVAL_COUNT):
    """Explain the first `count` eval instances, two jobs at a time."""
    ev_x, _ = bench.dataset.split("eval")
    schedule = bench.model.base_schedule()
    refine = RefineConfig()

    def job(i: int):
        x = ev_x[i : i + 1]
        source = int(predict_probs(bench.classifier, x).argmax())
        attack = AttackConfig(**{**attack_base.snapshot(), "seed": 10_000 + i})
        return explain(x, 1 - source, bench.classifier, bench.model, schedule, attack, refine)

    torch.set_num_threads(1)
    try:
        with ThreadPoolExecutor(WORKERS) as pool:
            results = list(pool.map(job, range(count)))
    finally:
        torch.set_num_threads(2)
    return results


@pytest.fixture(scope="session")
def benchmark_runs(bench):
    start = time.time()
    results = _run_batch(bench, AttackConfig())
    print(f"\n[acceptance] {EVAL_COUNT} default explain runs in {time.time() - start:.0f}s")
    return results


def test_classifier_meets_benchmark_accuracy(bench):
    assert bench.accuracy >= 0.95


def test_filter_preserves_heldout_decisions(bench):
    # held-out instances beyond the 200 used for counterfactual runs
    ev_x, _ = bench.dataset.split("eval")
    schedule = respace(bench.model.base_schedule(), 50)
    bound = bench.model.with_schedule(schedule)
    kept = 0
    total = 64
    with torch.no_grad():
        for i in range(EVAL_COUNT, EVAL_COUNT + total):
            x = ev_x[i : i + 1]
            fx = filter_image(x, 5, bound, schedule, seed=777 + i)
            kept += int(
                predict_probs(bench.classifier, x).argmax()
                == predict_probs(bench.classifier, fx).argmax()
            )
    assert kept / total >= 0.90


def test_flip_rate_target(benchmark_runs):
    rate = sum(r.flipped for r in benchmark_runs) / len(benchmark_runs)
    print(f"\n[acceptance] default flip rate: {rate:.4f} over {len(benchmark_runs)} runs")
    assert len(benchmark_runs) == EVAL_COUNT
    assert rate >= 0.95


def test_outside_mask_identity(benchmark_runs, tmp_path):
    for result in benchmark_runs:
        outside = ~result.mask.binary
        if outside.any():
            assert torch.equal(
                result.counterfactual[0, :, outside], result.input[0, :, outside]
            )
    # and the identity survives PNG quantization
    sample = benchmark_runs[0]
    write_run_dir(sample, tmp_path / "run", seed=0)
    loaded = read_run_dir(tmp_path / "run")
    outside = ~loaded["mask"]
    assert torch.equal(
        loaded["counterfactual"][0, :, outside], loaded["input"][0, :, outside]
    )


def test_frechet_oracle():
    rng = np.random.default_rng(2024)
    for trial in range(20):
        dim = int(rng.integers(2, 10))
        count = int(rng.integers(dim + 2, 60))
        feats_a = rng.normal(size=(count, dim)) @ rng.normal(size=(dim, dim)) * 0.5
        feats_b = rng.normal(size=(count, dim)) + rng.normal(size=dim)
        images_a = torch.from_numpy(feats_a.reshape(count, 1, 1, dim))
        images_b = torch.from_numpy(feats_b.reshape(count, 1, 1, dim))
        enc = IdentityEncoder(dim)
        closed_form = frechet_distance(
            GaussianStats.from_features(feats_a), GaussianStats.from_features(feats_b)
        )
        assert fid(images_a, images_b, enc) == pytest.approx(closed_form, abs=1e-6)

        stats_a = GaussianStats.from_features(feats_a)
        stats_b = GaussianStats.from_features(feats_b)
        assert frechet_distance(stats_a, stats_b) == pytest.approx(
            frechet_distance(stats_b, stats_a), abs=1e-8
        )
        assert frechet_distance(stats_a, stats_a) <= 1e-8


def test_sfid_protocol():
    gen = torch.Generator().manual_seed(31)
    dataset = torch.rand(40, 3, 8, 8, generator=gen)
    enc = IdentityEncoder(3 * 8 * 8)

    def generate(batch: torch.Tensor):
        return [img[None] * 0.97 + 0.01 for img in batch]

    mean_a, splits_a = sfid(dataset, generate, enc, num_splits=10, seed=99)
    mean_b, splits_b = sfid(dataset, generate, enc, num_splits=10, seed=99)
    assert len(splits_a) == 10
    assert mean_a == sum(splits_a) / len(splits_a)
    assert json.dumps(splits_a) == json.dumps(splits_b)
    assert mean_a == mean_b


def test_gradient_check_under_one_minute():
    start = time.time()
    torch.manual_seed(8)
    geometry = ImageGeometry(1, 4, 4)
    net = EpsilonNet(geometry, base_channels=8).double()
    schedule = respace(build_schedule(40), 8)
    model = DenoiserModel(net, schedule)
    weights = torch.randn(2, 16, dtype=torch.float64) * 0.4

    class Linear(torch.nn.Module):
        def forward(self, z):
            return z.reshape(z.shape[0], -1) @ weights.T

    clf = Linear()
    config = AttackConfig(lambda_d=0.01, distance_norm="l1", tau=3, respaced_steps=8)

    def filter_fn(z: torch.Tensor) -> torch.Tensor:
        return filter_image(z, 3, model, schedule, seed=123)

    gen = torch.Generator().manual_seed(5)
    x = torch.rand(1, 1, 4, 4, generator=gen, dtype=torch.float64) * 0.8 - 0.4
    x_orig = torch.rand(1, 1, 4, 4, generator=gen, dtype=torch.float64) * 0.8 - 0.4
    x_var = x.clone().requires_grad_(True)
    (grad,) = torch.autograd.grad(total_objective(x_var, x_orig, 1, clf, filter_fn, config), x_var)

    h = 1e-3
    with torch.no_grad():
        for idx in range(16):
            delta = torch.zeros(16, dtype=torch.float64)
            delta[idx] = h
            delta = delta.reshape(1, 1, 4, 4)
            up = total_objective(x + delta, x_orig, 1, clf, filter_fn, config)
            down = total_objective(x - delta, x_orig, 1, clf, filter_fn, config)
            numeric = float((up - down) / (2 * h))
            analytic = float(grad.reshape(-1)[idx])
            assert analytic == pytest.approx(numeric, rel=1e-3, abs=1e-10)
    assert time.time() - start < 60.0


def test_forward_chain_statistics():
    schedule = build_schedule(1000)
    t = schedule.num_steps
    n = 10_000
    gen = torch.Generator().manual_seed(4242)
    x0 = torch.rand(1, 1, 4, 4, generator=gen) * 0.6 - 0.3
    eps = torch.randn(n, 1, 4, 4, generator=gen)
    draws = forward_diffuse(x0.expand(n, -1, -1, -1), t, eps, schedule)
    mean_band = 3.0 / math.sqrt(n)
    var_band = 3.0 * math.sqrt(2.0 / n)
    assert torch.all(draws.mean(0).abs() < mean_band)
    assert torch.all((draws.var(0) - 1.0).abs() < var_band)


def _scripted_mask_oracle(x: np.ndarray, x_pre: np.ndarray, d: int, u: float) -> np.ndarray:
    diff = np.abs(x - x_pre).sum(axis=0)
    peak = diff.max()
    if peak == 0:
        return np.zeros_like(diff, dtype=bool)
    norm = diff / peak
    h, w = norm.shape
    r = d // 2
    out = np.empty_like(norm)
    for i in range(h):
        for j in range(w):
            out[i, j] = norm[max(0, i - r) : i + r + 1, max(0, j - r) : j + r + 1].max()
    return out >= u


def test_mask_rule_oracle():
    rng = np.random.default_rng(777)
    for trial in range(50):
        h, w = int(rng.integers(2, 12)), int(rng.integers(2, 12))
        x = rng.uniform(-1, 1, size=(3, h, w)).astype(np.float32)
        if trial % 10 == 0:
            x_pre = x.copy()  # degenerate zero-difference case
        else:
            x_pre = rng.uniform(-1, 1, size=(3, h, w)).astype(np.float32)
        d = int(rng.choice([1, 3, 5, 7]))
        u = float(rng.uniform(0, 1))
        mask = compute_mask(torch.from_numpy(x)[None], torch.from_numpy(x_pre)[None], d, u)
        assert np.array_equal(mask.binary.numpy(), _scripted_mask_oracle(x, x_pre, d, u))


def test_cout_bounds_and_endpoints():
    rng = np.random.default_rng(11)
    gen = torch.Generator().manual_seed(11)
    for _ in range(100):
        x = torch.rand(1, 3, 6, 6, generator=gen) * 2 - 1
        x_ce = torch.rand(1, 3, 6, 6, generator=gen) * 2 - 1
        weights = torch.randn(2, 108, generator=gen) * float(rng.uniform(0.1, 2.0))

        class Lin(torch.nn.Module):
            def __init__(self, w):
                super().__init__()
                self.w = w

            def forward(self, z):
                return z.reshape(z.shape[0], -1) @ self.w.T

        value = cout(x, x_ce, Lin(weights), y=0, y_prime=1, num_steps=int(rng.integers(1, 30)))
        assert -1.0 <= value <= 1.0

    class Certain(torch.nn.Module):
        def __init__(self, label):
            super().__init__()
            self.label = label

        def forward(self, z):
            logits = torch.full((z.shape[0], 2), -200.0)
            logits[:, self.label] = 200.0
            return logits

    x = torch.rand(1, 3, 4, 4, generator=gen)
    x_ce = torch.rand(1, 3, 4, 4, generator=gen)
    assert cout(x, x_ce, Certain(1), y=0, y_prime=1) == 1.0
    assert cout(x, x_ce, Certain(0), y=0, y_prime=1) == -1.0


def test_diversity_protocol(bench):
    from diffcf.metrics import ClassifierFeatureEncoder, CosineFeatureDistance, diversity

    ev_x, _ = bench.dataset.split("eval")
    x = ev_x[0:1]
    source = int(predict_probs(bench.classifier, x).argmax())
    schedule = bench.model.base_schedule()
    attack = AttackConfig(seed=5)
    refine = RefineConfig()
    distance = CosineFeatureDistance(ClassifierFeatureEncoder(bench.classifier))

    results = diverse_explanations(
        x, 1 - source, 4, bench.classifier, bench.model, schedule, attack, refine
    )
    images = [r.counterfactual for r in results]
    distinct_pairs = sum(
        1
        for i in range(4)
        for j in range(i + 1, 4)
        if not torch.equal(images[i], images[j])
    )
    sigma = diversity(images, distance)
    print(f"\n[acceptance] diversity sigma={sigma:.5f}, distinct pairs={distinct_pairs}")
    assert sigma > 0.0
    assert distinct_pairs >= 2

    forced = diverse_explanations(
        x, 1 - source, 4, bench.classifier, bench.model, schedule, attack, refine,
        seeds=[42, 42, 42, 42],
    )
    sigma_forced = diversity([r.counterfactual for r in forced], distance)
    assert sigma_forced == 0.0


def test_attack_ablation_parity(bench):
    start = time.time()
    gd_runs = _run_batch(bench, AttackConfig(method="gd", num_iterations=100))
    gd_rate = sum(r.flipped for r in gd_runs) / len(gd_runs)
    cw_runs = _run_batch(bench, AttackConfig(method="cw", num_iterations=50))
    cw_rate = sum(r.flipped for r in cw_runs) / len(cw_runs)
    print(
        f"\n[acceptance] ablation flip rates: gd={gd_rate:.4f} cw={cw_rate:.4f} "
        f"({time.time() - start:.0f}s)"
    )
    assert gd_rate >= 0.95
    assert cw_rate >= 0.95


def test_end_to_end_determinism(bench, tmp_path):
    ev_x, _ = bench.dataset.split("eval")
    x = ev_x[3:4]
    source = int(predict_probs(bench.classifier, x).argmax())
    schedule = bench.model.base_schedule()
    manifests = []
    for name in ("a", "b"):
        result = explain(
            x, 1 - source, bench.classifier, bench.model, schedule,
            AttackConfig(seed=777), RefineConfig(),
        )
        manifest = write_run_dir(result, tmp_path / name, seed=777)
        manifests.append(manifest)
    for artifact in ("input.png", "pre_explanation.png", "mask.png", "counterfactual.png", "trace.json"):
        assert (tmp_path / "a" / artifact).read_bytes() == (tmp_path / "b" / artifact).read_bytes()
    canon = [json.dumps(canonical_manifest(m), sort_keys=True) for m in manifests]
    assert canon[0] == canon[1]
