"""Transition score: signed area between target- and source-class
probability curves while pixels morph from input to counterfactual.
"""

from __future__ import annotations

import numpy as np
import torch

from ..errors import ValidationError


def _pixel_order(x: torch.Tensor, x_ce: torch.Tensor) -> np.ndarray:
    magnitude = (x - x_ce).abs().sum(dim=-3).reshape(-1).cpu().numpy()
    # descending by magnitude, index order breaking ties deterministically
    return np.argsort(-magnitude, kind="stable")


def transition_sequence(x: torch.Tensor, x_ce: torch.Tensor, num_steps: int) -> torch.Tensor:
    """x^0 = x ... x^K = x_ce, replacing rank-ordered pixel batches.

    Batch sizes are as equal as possible with the remainder in the last one.
    """
    order = _pixel_order(x, x_ce)
    total = order.shape[0]
    base = total // num_steps
    sizes = [base] * (num_steps - 1) + [base + total % num_steps]
    h, w = x.shape[-2:]
    frames = [x[0]]
    cur = x[0].clone()
    cursor = 0
    for size in sizes:
        for flat in order[cursor : cursor + size]:
            i, j = divmod(int(flat), w)
            cur[:, i, j] = x_ce[0, :, i, j]
        cursor += size
        frames.append(cur.clone())
    return torch.stack(frames)


def cout(
    x: torch.Tensor,
    x_ce: torch.Tensor,
    classifier: torch.nn.Module,
    y: int,
    y_prime: int,
    num_steps: int = 20,
) -> float:
    """AUC(target) - AUC(source) over the K+1 transition frames; in [-1, 1]."""
    if y == y_prime:
        raise ValidationError("source and target labels must differ")
    if num_steps < 1:
        raise ValidationError("num_steps must be >= 1")
    if x.shape != x_ce.shape:
        raise ValidationError("input and counterfactual shapes differ")
    if x.ndim == 3:
        x, x_ce = x[None], x_ce[None]
    frames = transition_sequence(x, x_ce, num_steps)
    classifier.eval()
    with torch.inference_mode():
        probs = torch.softmax(classifier(frames), dim=-1)
    auc_target = float(probs[:, y_prime].mean())
    auc_source = float(probs[:, y].mean())
    return auc_target - auc_source
