from .attack import (
    PreExplanation,
    attack_step,
    classification_objective,
    generate_pre_explanation,
    margin_objective,
    total_objective,
)
from .config import AttackConfig, RefineConfig, derive_seed
from .mask import Mask, compute_mask, grey_dilate
from .pipeline import CounterfactualResult, diverse_explanations, explain
from .refine import repaint_refine
from .runio import read_run_dir, write_run_dir

__all__ = [
    "AttackConfig",
    "CounterfactualResult",
    "Mask",
    "PreExplanation",
    "RefineConfig",
    "attack_step",
    "classification_objective",
    "compute_mask",
    "derive_seed",
    "diverse_explanations",
    "explain",
    "generate_pre_explanation",
    "grey_dilate",
    "margin_objective",
    "read_run_dir",
    "repaint_refine",
    "total_objective",
    "write_run_dir",
]
