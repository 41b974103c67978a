from __future__ import annotations

import numpy as np
import pytest
import torch
import torch.nn as nn
from hypothesis import given, settings
from hypothesis import strategies as st

from diffcf.errors import ValidationError
from diffcf.metrics import (
    IdentityEncoder,
    cout,
    diversity,
    embedding_similarity,
    flip_rate,
    transition_sequence,
)


class ConstantProbs(nn.Module):
    def __init__(self, probs):
        super().__init__()
        self.logits = torch.log(torch.tensor(probs))

    def forward(self, x):
        return self.logits.expand(x.shape[0], -1)


class ScriptedProbs(nn.Module):
    """Emits a fixed probability row per call order (frame index)."""

    def __init__(self, rows):
        super().__init__()
        self.rows = torch.log(torch.tensor(rows))

    def forward(self, x):
        assert x.shape[0] == self.rows.shape[0]
        return self.rows


def test_flip_rate_basics():
    assert flip_rate([True, True]) == 1.0
    assert flip_rate([True, True, True, False]) == 0.75
    assert flip_rate([False, False]) == 0.0
    with pytest.raises(ValidationError):
        flip_rate([])


def test_flip_rate_permutation_invariant():
    flags = [True, False, True, True, False]
    assert flip_rate(flags) == flip_rate(list(reversed(flags)))


def test_cout_certain_target_is_plus_one():
    clf = ConstantProbs([1.0 - 1e-9, 1e-9][::-1])  # certain of class 1
    x = torch.rand(1, 3, 4, 4)
    x_ce = torch.rand(1, 3, 4, 4)
    assert cout(x, x_ce, clf, y=0, y_prime=1) == pytest.approx(1.0, abs=1e-6)


def test_cout_certain_source_is_minus_one():
    clf = ConstantProbs([1.0 - 1e-9, 1e-9])  # certain of class 0
    x = torch.rand(1, 3, 4, 4)
    x_ce = torch.rand(1, 3, 4, 4)
    assert cout(x, x_ce, clf, y=0, y_prime=1) == pytest.approx(-1.0, abs=1e-6)


def test_cout_scripted_three_frame_oracle():
    # K=2: AUC_target = (0.1+0.6+0.9)/3, AUC_source = (0.9+0.4+0.1)/3
    rows = [[0.9, 0.1], [0.4, 0.6], [0.1, 0.9]]
    clf = ScriptedProbs(rows)
    x = torch.zeros(1, 1, 1, 2)
    x_ce = torch.ones(1, 1, 1, 2)
    value = cout(x, x_ce, clf, y=0, y_prime=1, num_steps=2)
    assert value == pytest.approx((1.6 - 1.4) / 3.0, abs=1e-6)
    assert value == pytest.approx(0.0667, abs=1e-3)


def test_cout_rejects_equal_labels():
    with pytest.raises(ValidationError):
        cout(torch.zeros(1, 1, 2, 2), torch.zeros(1, 1, 2, 2), ConstantProbs([0.5, 0.5]), 1, 1)


def test_transition_sequence_endpoints_and_batching():
    gen = torch.Generator().manual_seed(0)
    x = torch.rand(1, 3, 5, 5, generator=gen)
    x_ce = torch.rand(1, 3, 5, 5, generator=gen)
    frames = transition_sequence(x, x_ce, num_steps=4)
    assert frames.shape[0] == 5
    assert torch.equal(frames[0], x[0])
    assert torch.equal(frames[-1], x_ce[0])
    # 25 pixels over 4 batches: 6, 6, 6, 7 replaced cumulatively
    changed = [(frames[k] != frames[0]).any(0).sum().item() for k in range(5)]
    assert changed[1] <= 6 and changed[-1] <= 25


def test_transition_replaces_largest_differences_first():
    x = torch.zeros(1, 1, 1, 4)
    x_ce = torch.tensor([[[[0.1, 0.9, 0.5, 0.3]]]])
    frames = transition_sequence(x, x_ce, num_steps=4)
    assert frames[1][0, 0, 1] == pytest.approx(0.9)
    assert frames[2][0, 0, 2] == pytest.approx(0.5)


@given(seed=st.integers(0, 1000), k=st.integers(1, 30))
@settings(max_examples=25, deadline=None)
def test_cout_bounded(seed, k):
    gen = torch.Generator().manual_seed(seed)
    x = torch.rand(1, 2, 3, 3, generator=gen)
    x_ce = torch.rand(1, 2, 3, 3, generator=gen)
    w = torch.randn(3, 18, generator=gen)

    class Lin(nn.Module):
        def forward(self, z):
            return z.reshape(z.shape[0], -1) @ w.T

    value = cout(x, x_ce, Lin(), y=0, y_prime=2, num_steps=k)
    assert -1.0 <= value <= 1.0


def test_cout_invariant_to_other_class_reshuffling():
    # transformations preserving the two tracked probabilities leave it fixed
    gen = torch.Generator().manual_seed(4)
    x = torch.rand(1, 1, 3, 3, generator=gen)
    x_ce = torch.rand(1, 1, 3, 3, generator=gen)
    w = torch.randn(4, 9, generator=gen) * 0.5

    class Base(nn.Module):
        def forward(self, z):
            return z.reshape(z.shape[0], -1) @ w.T

    class Shuffled(nn.Module):
        def forward(self, z):
            logits = z.reshape(z.shape[0], -1) @ w.T
            return logits[:, [0, 1, 3, 2]]  # swap the two untracked classes

    a = cout(x, x_ce, Base(), y=0, y_prime=1, num_steps=5)
    b = cout(x, x_ce, Shuffled(), y=0, y_prime=1, num_steps=5)
    assert a == pytest.approx(b, abs=1e-7)


def test_embedding_similarity_self_pairs():
    enc = IdentityEncoder(8)
    imgs = [torch.rand(1, 2, 2, 2) + 0.1 for _ in range(3)]
    result = embedding_similarity([(im, im.clone()) for im in imgs], enc)
    assert result.mean == pytest.approx(1.0, abs=1e-9)
    assert result.excluded_pairs == 0


def test_embedding_similarity_orthogonal():
    enc = IdentityEncoder(2)
    a = torch.tensor([[[[1.0]], [[0.0]]]])
    b = torch.tensor([[[[0.0]], [[1.0]]]])
    result = embedding_similarity([(a, b)], enc)
    assert result.mean == pytest.approx(0.0, abs=1e-9)


def test_embedding_similarity_hand_built_mean():
    # cosines 0.8 and 0.6 from crafted 2-vectors
    enc = IdentityEncoder(2)

    def vec(vx, vy):
        return torch.tensor([[[[vx]], [[vy]]]], dtype=torch.float64)

    pair_a = (vec(1.0, 0.0), vec(0.8, 0.6))  # dot 0.8, unit norms
    pair_b = (vec(1.0, 0.0), vec(0.6, 0.8))  # dot 0.6
    result = embedding_similarity([pair_a, pair_b], enc)
    assert result.mean == pytest.approx(0.7, abs=1e-9)


def test_embedding_similarity_excludes_zero_norm():
    enc = IdentityEncoder(2)
    good = (torch.ones(1, 2, 1, 1), torch.ones(1, 2, 1, 1))
    bad = (torch.zeros(1, 2, 1, 1), torch.ones(1, 2, 1, 1))
    result = embedding_similarity([good, bad], enc)
    assert result.used_pairs == 1 and result.excluded_pairs == 1
    assert result.mean == pytest.approx(1.0, abs=1e-9)


def test_embedding_similarity_scale_invariance():
    enc = IdentityEncoder(4)
    gen = torch.Generator().manual_seed(0)
    a = (torch.rand(1, 4, 1, 1, generator=gen) + 0.1).double()
    b = (torch.rand(1, 4, 1, 1, generator=gen) + 0.1).double()
    base = embedding_similarity([(a, b)], enc).mean
    scaled = embedding_similarity([(3.7 * a, 0.2 * b)], enc).mean
    assert base == pytest.approx(scaled, abs=1e-12)


def test_diversity_identical_images_zero():
    img = torch.rand(1, 3, 4, 4)
    stub = lambda a, b: float((a - b).abs().mean())  # noqa: E731
    assert diversity([img, img.clone(), img.clone()], stub) == 0.0


def test_diversity_mean_of_pairwise_distances():
    imgs = [torch.zeros(1, 1, 1, 1), torch.ones(1, 1, 1, 1), torch.full((1, 1, 1, 1), 0.4)]
    lookup = {(0, 1): 0.1, (0, 2): 0.2, (1, 2): 0.3}

    calls = []

    def stub(a, b):
        key = (imgs.index(a), imgs.index(b))
        calls.append(key)
        return lookup[key]

    assert diversity(imgs, stub) == pytest.approx(0.2)
    assert calls == [(0, 1), (0, 2), (1, 2)]


def test_diversity_single_image_rejected():
    with pytest.raises(ValidationError):
        diversity([torch.zeros(1, 1, 1, 1)], lambda a, b: 0.0)
