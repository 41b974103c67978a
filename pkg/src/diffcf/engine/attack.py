"""Adversarial optimization through the diffusion filter.

The loop refilters the current iterate with fresh noise every iteration,
backpropagates the objective to the iterate, and applies the chosen update
rule, clipping back to the pixel range. No epsilon-ball projection: the
filter itself is what keeps iterates on-distribution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import torch
import torch.nn.functional as F

from ..diffusion.chain import DenoiserFn, filter_image
from ..diffusion.schedule import Schedule
from ..errors import NonFiniteGradientError, ValidationError
from .config import AttackConfig

PIXEL_MIN, PIXEL_MAX = -1.0, 1.0

FilterFn = Callable[[torch.Tensor], torch.Tensor]
ProgressFn = Callable[[int, float], None]


@dataclass
class PreExplanation:
    image: torch.Tensor
    objective_trace: list[float] = field(default_factory=list)
    final_target_prob: float = 0.0
    flipped: bool = False


def classification_objective(
    x_filtered: torch.Tensor, y_prime: int, classifier: torch.nn.Module
) -> torch.Tensor:
    """Cross-entropy of the classifier at the filtered image against the target."""
    logits = classifier(x_filtered)
    if not 0 <= y_prime < logits.shape[-1]:
        raise ValidationError(f"target label {y_prime} outside 0..{logits.shape[-1] - 1}")
    target = torch.full((logits.shape[0],), y_prime, dtype=torch.long)
    return F.cross_entropy(logits, target)


def margin_objective(
    x_filtered: torch.Tensor, y_source: int, y_prime: int, classifier: torch.nn.Module, kappa: float = 0.0
) -> torch.Tensor:
    """max(logit_source - logit_target, -kappa): zero once the flip holds."""
    logits = classifier(x_filtered)
    if not 0 <= y_prime < logits.shape[-1]:
        raise ValidationError(f"target label {y_prime} outside 0..{logits.shape[-1] - 1}")
    margin = logits[:, y_source] - logits[:, y_prime]
    return torch.clamp(margin, min=-kappa).mean()


def distance_term(anchor: torch.Tensor, x_orig: torch.Tensor, norm: str) -> torch.Tensor:
    diff = anchor - x_orig
    if norm == "l1":
        return diff.abs().mean()
    if norm == "l2":
        return diff.pow(2).mean()
    raise ValidationError(f"unknown distance norm {norm!r}")


def total_objective(
    x_iterate: torch.Tensor,
    x_orig: torch.Tensor,
    y_prime: int,
    classifier: torch.nn.Module,
    filter_fn: FilterFn,
    config: AttackConfig,
) -> torch.Tensor:
    """Classification loss at the filtered iterate plus the distance penalty."""
    if x_iterate.shape != x_orig.shape:
        raise ValidationError("iterate and original shapes differ")
    filtered = filter_fn(x_iterate)
    loss = classification_objective(filtered, y_prime, classifier)
    if config.lambda_d > 0:
        anchor = x_iterate if config.distance_anchor == "iterate" else filtered
        loss = loss + config.lambda_d * distance_term(anchor, x_orig, config.distance_norm)
    return loss


def attack_step(x: torch.Tensor, grad: torch.Tensor, config: AttackConfig) -> torch.Tensor:
    """One update of the chosen attack, clipped to the pixel range."""
    if grad.shape != x.shape:
        raise ValidationError("gradient shape differs from image shape")
    alpha = config.resolved_step_size()
    if config.method == "pgd":
        step = alpha * torch.sign(grad)
    elif config.method in ("gd", "cw"):
        step = alpha * grad
    else:
        config.validate()
        raise ValidationError(f"unknown attack method {config.method!r}")
    return torch.clamp(x - step, PIXEL_MIN, PIXEL_MAX)


def generate_pre_explanation(
    x: torch.Tensor,
    y_prime: int,
    classifier: torch.nn.Module,
    model: DenoiserFn,
    schedule: Schedule,
    config: AttackConfig,
    progress: ProgressFn | None = None,
) -> PreExplanation:
    """Run the attack loop and return the final iterate with its trace.

    The margin-loss variant runs twice the configured iterations, matching
    its slower progress toward the flip.
    """
    config.validate()
    classifier.eval()
    gen = torch.Generator().manual_seed(config.seed)
    x_orig = x.detach().clone()

    y_source = None
    if config.method == "cw":
        with torch.inference_mode():
            y_source = int(classifier(x_orig).argmax(dim=-1)[0])

    iterations = config.num_iterations * (2 if config.method == "cw" else 1)
    x_cur = x.detach().clone()
    trace: list[float] = []
    for i in range(iterations):
        x_var = x_cur.clone().requires_grad_(True)
        filtered = filter_image(x_var, config.tau, model, schedule, generator=gen)
        if config.method == "cw":
            loss = margin_objective(filtered, y_source, y_prime, classifier)
        else:
            loss = classification_objective(filtered, y_prime, classifier)
        if config.lambda_d > 0:
            anchor = x_var if config.distance_anchor == "iterate" else filtered
            loss = loss + config.lambda_d * distance_term(anchor, x_orig, config.distance_norm)
        (grad,) = torch.autograd.grad(loss, x_var)
        objective = float(loss.detach())
        if not torch.isfinite(grad).all():
            raise NonFiniteGradientError(
                f"non-finite gradient at iteration {i}", iteration=i, objective=objective
            )
        trace.append(objective)
        x_cur = attack_step(x_cur, grad.detach(), config)
        if progress is not None:
            progress(i + 1, objective)

    with torch.inference_mode():
        probs = torch.softmax(classifier(x_cur), dim=-1)[0]
    return PreExplanation(
        image=x_cur,
        objective_trace=trace,
        final_target_prob=float(probs[y_prime]),
        flipped=bool(int(probs.argmax()) == y_prime),
    )
