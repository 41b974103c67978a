"""Batch evaluation over run directories into a single metric report."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from ..engine.runio import read_run_dir
from ..errors import ValidationError
from .encoders import CosineFeatureDistance, FeatureEncoder
from .frechet import fid
from .similarity import diversity, embedding_similarity
from .transition import cout

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1


def flip_rate(flipped_flags: Sequence[bool]) -> float:
    """Fraction of counterfactuals classified as their target label."""
    if len(flipped_flags) == 0:
        raise ValidationError("flip_rate needs a non-empty result list")
    return sum(1 for f in flipped_flags if f) / len(flipped_flags)


@dataclass
class MetricReport:
    flip_rate: float
    fid: float | None = None
    sfid_mean: float | None = None
    sfid_splits: list[float] = field(default_factory=list)
    fs: float | None = None
    s3: float | None = None
    cout: float | None = None
    diversity: float | None = None
    counts: dict[str, int] = field(default_factory=dict)
    seed: int = 0
    config: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "flip_rate": self.flip_rate,
            "fid": self.fid,
            "sfid": {"mean": self.sfid_mean, "splits": self.sfid_splits},
            "fs": self.fs,
            "s3": self.s3,
            "cout": self.cout,
            "diversity": self.diversity,
            "counts": self.counts,
            "seed": self.seed,
            "config": self.config,
        }


def _split_fid_over_runs(
    inputs: torch.Tensor,
    counterfactuals: torch.Tensor,
    encoder: FeatureEncoder,
    num_splits: int,
    seed: int,
) -> tuple[float, list[float]]:
    """Counterfactuals of one random half against raw inputs of the other.

    Runs are per-instance independent, so splitting precomputed results is
    the same protocol as generating on one half per split.
    """
    n = inputs.shape[0]
    if n < 4:
        raise ValidationError("split FID needs at least 4 runs")
    rng = np.random.default_rng(seed)
    values = []
    for _ in range(num_splits):
        perm = rng.permutation(n)
        half = n // 2
        values.append(fid(counterfactuals[perm[:half]], inputs[perm[half:]], encoder))
    return sum(values) / len(values), values


def evaluate_runs(
    run_dirs: Sequence[str | Path],
    classifier: torch.nn.Module | None,
    *,
    fid_encoder: FeatureEncoder | None = None,
    fs_encoder: FeatureEncoder | None = None,
    s3_encoder: FeatureEncoder | None = None,
    perceptual_encoder: FeatureEncoder | None = None,
    cout_steps: int = 20,
    sfid_num_splits: int = 10,
    seed: int = 0,
) -> MetricReport:
    """Compute the metric suite over a batch of persisted runs.

    Realism metrics (FID, split FID) use only valid (flipped) counterfactuals;
    similarity and transition metrics cover every succeeded run. Pass None
    for an encoder or the classifier to skip the metrics that need it.
    """
    if not run_dirs:
        raise ValidationError("no run directories given")
    runs = [read_run_dir(d) for d in run_dirs]
    flags = [bool(r["manifest"]["flipped"]) for r in runs]
    inputs = torch.cat([r["input"] for r in runs])
    ces = torch.cat([r["counterfactual"] for r in runs])

    report = MetricReport(
        flip_rate=flip_rate(flags),
        counts={"total": len(runs), "valid": sum(flags), "invalid": len(runs) - sum(flags)},
        seed=seed,
        config={"cout_steps": cout_steps, "sfid_num_splits": sfid_num_splits},
    )

    valid_idx = [i for i, f in enumerate(flags) if f]
    if fid_encoder is not None and len(valid_idx) >= 2:
        report.fid = fid(ces[valid_idx], inputs, fid_encoder)
        if len(valid_idx) >= 4:
            report.sfid_mean, report.sfid_splits = _split_fid_over_runs(
                inputs[valid_idx], ces[valid_idx], fid_encoder, sfid_num_splits, seed
            )

    pairs = list(zip(inputs[:, None], ces[:, None]))
    if fs_encoder is not None:
        sim = embedding_similarity(pairs, fs_encoder)
        report.fs = sim.mean
        report.counts["fs_excluded_pairs"] = sim.excluded_pairs
    if s3_encoder is not None:
        sim = embedding_similarity(pairs, s3_encoder)
        report.s3 = sim.mean
        report.counts["s3_excluded_pairs"] = sim.excluded_pairs

    if classifier is not None:
        values = []
        for r in runs:
            man = r["manifest"]
            values.append(
                cout(
                    r["input"],
                    r["counterfactual"],
                    classifier,
                    man["source_label"],
                    man["target_label"],
                    num_steps=cout_steps,
                )
            )
        report.cout = float(np.mean(values))

    if perceptual_encoder is not None:
        distance = CosineFeatureDistance(perceptual_encoder)
        groups: dict[str, list[torch.Tensor]] = {}
        for r in runs:
            instance = str(r["manifest"].get("config", {}).get("assets", {}).get("instance", ""))
            if instance:
                groups.setdefault(instance, []).append(r["counterfactual"])
        sigmas = [diversity(imgs, distance) for imgs in groups.values() if len(imgs) >= 2]
        if sigmas:
            report.diversity = float(np.mean(sigmas))
            report.counts["diversity_groups"] = len(sigmas)
    return report
