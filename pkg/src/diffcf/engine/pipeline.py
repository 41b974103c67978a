"""End-to-end counterfactual pipeline: attack, mask, refine, record."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import torch

from ..diffusion.denoiser import DenoiserModel
from ..diffusion.schedule import NoiseSchedule, respace
from ..errors import ValidationError
from .attack import PreExplanation, ProgressFn, generate_pre_explanation
from .config import AttackConfig, RefineConfig, derive_seed
from .mask import Mask, compute_mask
from .refine import repaint_refine


@dataclass
class CounterfactualResult:
    input: torch.Tensor
    source_label: int
    target_label: int
    pre_explanation: PreExplanation
    mask: Mask
    counterfactual: torch.Tensor
    probs_input: list[float]
    probs_counterfactual: list[float]
    flipped: bool
    attack_config: AttackConfig
    refine_config: RefineConfig
    timing: dict[str, float] = field(default_factory=dict)

    @property
    def objective_trace(self) -> list[float]:
        return self.pre_explanation.objective_trace


def _probs(classifier: torch.nn.Module, x: torch.Tensor) -> torch.Tensor:
    with torch.inference_mode():
        return torch.softmax(classifier(x), dim=-1)[0]


def explain(
    x: torch.Tensor,
    y_prime: int,
    classifier: torch.nn.Module,
    model: DenoiserModel,
    schedule: NoiseSchedule,
    attack: AttackConfig,
    refine: RefineConfig,
    progress: ProgressFn | None = None,
) -> CounterfactualResult:
    """Produce a mask-localized counterfactual for one instance.

    A non-flipped outcome is a valid result; only a degenerate request
    (target equals the current prediction) is rejected.
    """
    attack.validate()
    refine.validate()
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[0] != 1:
        raise ValidationError("explain expects a single (C, H, W) image")

    t_start = time.perf_counter()
    probs_in = _probs(classifier, x)
    source = int(probs_in.argmax())
    if y_prime == source:
        raise ValidationError(f"target label {y_prime} equals the current prediction")

    attack_schedule = respace(schedule, attack.respaced_steps)
    attack_model = model.with_schedule(attack_schedule)
    pre = generate_pre_explanation(
        x, y_prime, classifier, attack_model, attack_schedule, attack, progress=progress
    )
    t_attack = time.perf_counter()

    mask = compute_mask(x, pre.image, refine.mask_dilation, refine.mask_threshold)
    if not refine.apply_mask:
        mask = Mask(
            binary=torch.ones_like(mask.binary),
            raw_magnitude=mask.raw_magnitude,
            dilation_size=mask.dilation_size,
            threshold=mask.threshold,
        )
    refine_steps = refine.respaced_steps or attack.respaced_steps
    refine_tau = attack.tau if refine.tau is None else refine.tau
    refine_schedule = respace(schedule, refine_steps)
    refine_model = model.with_schedule(refine_schedule)
    x_ce = repaint_refine(
        x,
        pre.image,
        mask,
        refine_tau,
        refine_model,
        refine_schedule,
        seed=derive_seed(attack.seed, "refine"),
    )
    t_refine = time.perf_counter()

    probs_ce = _probs(classifier, x_ce)
    return CounterfactualResult(
        input=x,
        source_label=source,
        target_label=y_prime,
        pre_explanation=pre,
        mask=mask,
        counterfactual=x_ce,
        probs_input=[float(p) for p in probs_in],
        probs_counterfactual=[float(p) for p in probs_ce],
        flipped=bool(int(probs_ce.argmax()) == y_prime),
        attack_config=attack,
        refine_config=refine,
        timing={
            "attack_seconds": t_attack - t_start,
            "refine_seconds": t_refine - t_attack,
            "total_seconds": time.perf_counter() - t_start,
        },
    )


def diverse_explanations(
    x: torch.Tensor,
    y_prime: int,
    k: int,
    classifier: torch.nn.Module,
    model: DenoiserModel,
    schedule: NoiseSchedule,
    attack: AttackConfig,
    refine: RefineConfig,
    seeds: list[int] | None = None,
) -> list[CounterfactualResult]:
    """k stochastic variants of one explanation.

    Each run gets its own seed and draws a refinement respacing from the
    configured candidates, scaling tau to keep the attack's tau/steps ratio;
    mask localization is disabled so the whole image may vary.
    """
    if k < 2:
        raise ValidationError("diversity needs k >= 2 runs")
    attack.validate()
    refine.validate()
    if seeds is None:
        seeds = [derive_seed(attack.seed, f"diverse-{i}") for i in range(k)]
    if len(seeds) != k:
        raise ValidationError(f"expected {k} seeds, got {len(seeds)}")

    candidates = tuple(s for s in refine.diversity_respacings if s <= schedule.num_steps)
    if not candidates:
        raise ValidationError(
            f"no diversity respacing candidate fits the {schedule.num_steps}-step schedule"
        )
    ratio = attack.tau / attack.respaced_steps
    results = []
    for run_seed in seeds:
        gen = torch.Generator().manual_seed(derive_seed(run_seed, "respacing-choice"))
        choice = candidates[int(torch.randint(len(candidates), (1,), generator=gen))]
        run_attack = AttackConfig(**{**attack.snapshot(), "seed": run_seed})
        run_refine = RefineConfig(
            **{
                **refine.snapshot(),
                "respaced_steps": choice,
                "tau": max(1, round(ratio * choice)),
                "apply_mask": False,
                "diversity_respacings": tuple(refine.diversity_respacings),
            }
        )
        results.append(explain(x, y_prime, classifier, model, schedule, run_attack, run_refine))
    return results
