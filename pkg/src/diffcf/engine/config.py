"""Attack and refinement configuration."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field

from ..errors import ConfigurationError

ATTACK_METHODS = ("pgd", "gd", "cw")
DISTANCE_NORMS = ("l1", "l2")
DISTANCE_ANCHORS = ("iterate", "filtered")

# Default step sizes in [-1, 1] pixel units: sign steps move a fixed amount
# per iteration, raw-gradient steps see filter-attenuated gradients and need
# a much larger scale to make comparable progress.
DEFAULT_STEP_SIZES = {"pgd": 2.0 / 255.0, "gd": 1.0, "cw": 1.0}


@dataclass
class AttackConfig:
    method: str = "pgd"
    num_iterations: int = 50
    step_size: float | None = None
    lambda_d: float = 0.001
    distance_norm: str = "l1"
    tau: int = 5
    respaced_steps: int = 50
    # Eq-style penalty anchors the distance on the optimization variable;
    # the alternative anchors it on the filtered output.
    distance_anchor: str = "iterate"
    seed: int = 0

    def resolved_step_size(self) -> float:
        if self.step_size is not None:
            return self.step_size
        return DEFAULT_STEP_SIZES.get(self.method, DEFAULT_STEP_SIZES["pgd"])

    def validate(self) -> None:
        problems = self.problems()
        if problems:
            raise ConfigurationError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if self.method not in ATTACK_METHODS:
            out.append(f"unknown attack method {self.method!r} (choose from {ATTACK_METHODS})")
        if self.num_iterations < 0:
            out.append("num_iterations must be >= 0")
        if self.step_size is not None and self.step_size <= 0:
            out.append("step_size must be > 0")
        if self.lambda_d < 0:
            out.append("lambda_d must be >= 0")
        if self.distance_norm not in DISTANCE_NORMS:
            out.append(f"unknown distance norm {self.distance_norm!r}")
        if self.distance_anchor not in DISTANCE_ANCHORS:
            out.append(f"unknown distance anchor {self.distance_anchor!r}")
        if self.tau < 0:
            out.append("tau must be >= 0")
        if self.respaced_steps < 1:
            out.append("respaced_steps must be >= 1")
        if self.tau > self.respaced_steps:
            out.append("tau cannot exceed respaced_steps")
        return out

    def snapshot(self) -> dict:
        out = asdict(self)
        out["step_size"] = self.resolved_step_size()
        return out


@dataclass
class RefineConfig:
    mask_threshold: float = 0.15
    mask_dilation: int = 15
    # None reuses the attack's respacing/tau at the refinement stage.
    respaced_steps: int | None = None
    tau: int | None = None
    apply_mask: bool = True
    # Candidate refinement respacings for the diversity protocol; each run
    # picks one and scales tau to keep the attack's tau/steps ratio.
    diversity_respacings: tuple[int, ...] = (25, 40, 50, 100)

    def validate(self) -> None:
        problems = self.problems()
        if problems:
            raise ConfigurationError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if not 0.0 <= self.mask_threshold <= 1.0:
            out.append("mask_threshold must be in [0, 1]")
        if self.mask_dilation < 1 or self.mask_dilation % 2 == 0:
            out.append("mask_dilation must be an odd positive integer")
        if self.respaced_steps is not None and self.respaced_steps < 1:
            out.append("respaced_steps must be >= 1")
        if self.tau is not None and self.tau < 0:
            out.append("tau must be >= 0")
        if not self.diversity_respacings:
            out.append("diversity_respacings must be non-empty")
        return out

    def snapshot(self) -> dict:
        return asdict(self)


def derive_seed(seed: int, tag: str) -> int:
    """Stable 63-bit sub-seed for a named stage of a run."""
    digest = hashlib.sha256(f"{seed}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1
