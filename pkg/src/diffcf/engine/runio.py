"""Run-directory serialization: four PNGs plus a manifest.

Internal images live in [-1, 1]; PNGs are 8-bit with the round-trip
uint8 -> float -> uint8 exact for every value. Volatile manifest fields
(timings) sit under a single key so determinism checks can drop them.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from ..errors import ValidationError
from .pipeline import CounterfactualResult

MANIFEST_SCHEMA_VERSION = 1
VOLATILE_MANIFEST_KEYS = ("timing",)

ARTIFACT_NAMES = ("input", "pre_explanation", "mask", "counterfactual")


def to_uint8(x: torch.Tensor) -> np.ndarray:
    """(1, C, H, W) or (C, H, W) in [-1, 1] -> (H, W, C) uint8."""
    arr = x.detach().cpu().numpy()
    if arr.ndim == 4:
        arr = arr[0]
    arr = np.transpose(arr, (1, 2, 0))
    return np.clip(np.round((arr + 1.0) / 2.0 * 255.0), 0, 255).astype(np.uint8)


def from_uint8(arr: np.ndarray) -> torch.Tensor:
    """(H, W, C) uint8 -> (1, C, H, W) float32 in [-1, 1]."""
    chw = np.transpose(arr.astype(np.float32), (2, 0, 1))
    return torch.from_numpy(chw / 255.0 * 2.0 - 1.0)[None]


def save_image_png(x: torch.Tensor, path: str | Path) -> None:
    Image.fromarray(to_uint8(x)).save(Path(path))


def load_image_png(path: str | Path) -> torch.Tensor:
    with Image.open(Path(path)) as im:
        return from_uint8(np.asarray(im.convert("RGB")))


def save_mask_png(mask_binary: torch.Tensor, path: str | Path) -> None:
    arr = (mask_binary.cpu().numpy().astype(np.uint8)) * 255
    Image.fromarray(arr, mode="L").save(Path(path))


def load_mask_png(path: str | Path) -> torch.Tensor:
    with Image.open(Path(path)) as im:
        return torch.from_numpy(np.asarray(im.convert("L")) >= 128)


def build_manifest(result: CounterfactualResult, *, seed: int, assets: dict | None = None) -> dict:
    return {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "kind": "explain",
        "seed": seed,
        "source_label": result.source_label,
        "target_label": result.target_label,
        "probs_input": result.probs_input,
        "probs_counterfactual": result.probs_counterfactual,
        "flipped": result.flipped,
        "final_target_prob": result.pre_explanation.final_target_prob,
        "mask_coverage": result.mask.coverage,
        "config": {
            "attack": result.attack_config.snapshot(),
            "refine": result.refine_config.snapshot(),
            "assets": assets or {},
        },
        "timing": result.timing,
    }


def canonical_manifest(manifest: dict) -> dict:
    """Manifest with volatile (timing) fields removed, for byte comparisons."""
    return {k: v for k, v in manifest.items() if k not in VOLATILE_MANIFEST_KEYS}


def dump_json(payload: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_run_dir(
    result: CounterfactualResult,
    out_dir: str | Path,
    *,
    seed: int,
    assets: dict | None = None,
    canonical: bool = False,
) -> dict:
    """Write the four artifacts plus manifest.json and trace.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_image_png(result.input, out / "input.png")
    save_image_png(result.pre_explanation.image, out / "pre_explanation.png")
    save_mask_png(result.mask.binary, out / "mask.png")
    save_image_png(result.counterfactual, out / "counterfactual.png")
    manifest = build_manifest(result, seed=seed, assets=assets)
    if canonical:
        manifest = canonical_manifest(manifest)
    dump_json(manifest, out / "manifest.json")
    dump_json({"objective_trace": result.objective_trace}, out / "trace.json")
    return manifest


def read_run_dir(run_dir: str | Path) -> dict:
    """Load a run directory back into tensors plus its manifest."""
    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise ValidationError(f"{run_dir} is not a run directory (no manifest.json)")
    manifest = json.loads(manifest_path.read_text())
    return {
        "manifest": manifest,
        "input": load_image_png(run_dir / "input.png"),
        "pre_explanation": load_image_png(run_dir / "pre_explanation.png"),
        "mask": load_mask_png(run_dir / "mask.png"),
        "counterfactual": load_image_png(run_dir / "counterfactual.png"),
    }
