"""Noise schedules for the forward/reverse diffusion chains.

Timesteps are 1-based at the API surface: ``t`` runs from 1 to ``num_steps``
and ``alpha_bar(0) == 1`` denotes the clean image. Internally the constants
are stored as float64 arrays of length ``num_steps`` with index ``t - 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, ValidationError

SCHEDULE_KINDS = ("linear", "cosine")

_LINEAR_BETA_START = 1e-4
_LINEAR_BETA_END = 0.02


def _linear_betas(num_steps: int) -> np.ndarray:
    # Ho et al. defaults were tuned for T=1000; the endpoints are kept fixed
    # for other T so short toy chains stay well-behaved.
    return np.linspace(_LINEAR_BETA_START, _LINEAR_BETA_END, num_steps, dtype=np.float64)


def _cosine_betas(num_steps: int, offset: float = 0.008) -> np.ndarray:
    def f(u: float) -> float:
        return math.cos((u + offset) / (1 + offset) * math.pi / 2) ** 2

    alpha_bar = np.array([f(t / num_steps) / f(0.0) for t in range(num_steps + 1)])
    betas = 1.0 - alpha_bar[1:] / alpha_bar[:-1]
    return np.clip(betas, 0.0, 0.999)


@dataclass(frozen=True)
class NoiseSchedule:
    """Diffusion constants over the full chain.

    ``alpha_bar[t-1]`` is the cumulative signal-retention coefficient at step
    ``t``; it is strictly positive and non-increasing.
    """

    betas: np.ndarray
    alpha_bars: np.ndarray

    def __post_init__(self) -> None:
        if self.betas.ndim != 1 or len(self.betas) == 0:
            raise ValidationError("schedule needs at least one step")
        if len(self.betas) != len(self.alpha_bars):
            raise ValidationError("betas and alpha_bars must have equal length")
        if np.any(self.betas <= 0) or np.any(self.betas >= 1):
            raise ValidationError("betas must lie in (0, 1)")
        if np.any(self.alpha_bars <= 0) or np.any(np.diff(self.alpha_bars) > 0):
            raise ValidationError("alpha_bar must be strictly positive and non-increasing")

    @property
    def num_steps(self) -> int:
        return len(self.betas)

    def validate_t(self, t: int) -> None:
        if not 1 <= t <= self.num_steps:
            raise ValidationError(f"timestep {t} outside schedule 1..{self.num_steps}")

    def alpha_bar(self, t: int) -> float:
        """Cumulative product of (1 - beta) up to step t; alpha_bar(0) = 1."""
        if t == 0:
            return 1.0
        self.validate_t(t)
        return float(self.alpha_bars[t - 1])

    def beta(self, t: int) -> float:
        self.validate_t(t)
        return float(self.betas[t - 1])

    def alpha(self, t: int) -> float:
        """Per-step retention alpha_t = alpha_bar(t) / alpha_bar(t-1)."""
        return self.alpha_bar(t) / self.alpha_bar(t - 1)

    def posterior_sigma(self, t: int) -> float:
        """Std of the reverse-step noise; zero at t=1 (deterministic final step)."""
        self.validate_t(t)
        a_prev = self.alpha_bar(t - 1)
        a_cur = self.alpha_bar(t)
        var = self.beta(t) * (1.0 - a_prev) / (1.0 - a_cur)
        return math.sqrt(max(var, 0.0))

    def original_index(self, t: int) -> int:
        """Index into the chain the denoiser network was trained on."""
        self.validate_t(t)
        return t


@dataclass(frozen=True)
class RespacedSchedule:
    """A uniform subsequence of a base schedule, for cheap sampling.

    ``kept_steps[k-1]`` is the original index behind respaced position ``k``;
    the last kept step is always the base chain's final step. ``alpha_bar``
    at kept positions equals the base values exactly (sliced, not recomputed).
    """

    base: NoiseSchedule
    kept_steps: tuple[int, ...]
    alpha_bars: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        kept = self.kept_steps
        if len(kept) == 0:
            raise ValidationError("respacing keeps no steps")
        if kept[0] < 1 or kept[-1] != self.base.num_steps:
            raise ValidationError("kept steps must start >= 1 and end at the final step")
        if any(b <= a for a, b in zip(kept, kept[1:])):
            raise ValidationError("kept steps must be strictly increasing")
        object.__setattr__(self, "alpha_bars", self.base.alpha_bars[np.array(kept) - 1])

    @property
    def num_steps(self) -> int:
        return len(self.kept_steps)

    def validate_t(self, t: int) -> None:
        if not 1 <= t <= self.num_steps:
            raise ValidationError(f"timestep {t} outside respaced schedule 1..{self.num_steps}")

    def alpha_bar(self, t: int) -> float:
        if t == 0:
            return 1.0
        self.validate_t(t)
        return float(self.alpha_bars[t - 1])

    def alpha(self, t: int) -> float:
        return self.alpha_bar(t) / self.alpha_bar(t - 1)

    def beta(self, t: int) -> float:
        """Effective beta of the coarse step, 1 - alpha_bar(t)/alpha_bar(t-1)."""
        return 1.0 - self.alpha(t)

    def posterior_sigma(self, t: int) -> float:
        self.validate_t(t)
        a_prev = self.alpha_bar(t - 1)
        a_cur = self.alpha_bar(t)
        var = self.beta(t) * (1.0 - a_prev) / (1.0 - a_cur)
        return math.sqrt(max(var, 0.0))

    def original_index(self, t: int) -> int:
        self.validate_t(t)
        return self.kept_steps[t - 1]


Schedule = NoiseSchedule | RespacedSchedule


def build_schedule(num_steps: int, kind: str = "linear") -> NoiseSchedule:
    """Construct a noise schedule of the given family."""
    if num_steps < 1:
        raise ValidationError("num_steps must be >= 1")
    if kind == "linear":
        betas = _linear_betas(num_steps)
    elif kind == "cosine":
        betas = _cosine_betas(num_steps)
    else:
        raise ConfigurationError(f"unsupported schedule kind {kind!r}; choose from {SCHEDULE_KINDS}")
    alpha_bars = np.cumprod(1.0 - betas)
    return NoiseSchedule(betas=betas, alpha_bars=alpha_bars)


def respace(schedule: NoiseSchedule, num_kept: int) -> RespacedSchedule:
    """Keep a uniform-stride subsequence of ``num_kept`` timesteps.

    Position k maps to original index floor(k * T / T'), which is strictly
    increasing for T' <= T and always ends exactly at T.
    """
    total = schedule.num_steps
    if num_kept < 1:
        raise ValidationError("respacing must keep at least one step")
    if num_kept > total:
        raise ValidationError(f"cannot respace {total} steps to {num_kept}")
    kept = tuple((k * total) // num_kept for k in range(1, num_kept + 1))
    return RespacedSchedule(base=schedule, kept_steps=kept)
