"""Task loss, batch-level balance regularizers, total objective.

Both balance terms measure the dispersion of cumulative per-expert weight
over a mini-batch, scaled by the squared mean (plus a stabilizer), so they
are zero exactly under uniform utilization and grow as any expert absorbs
weight at another's expense. Under hard Top-k routing the per-sample
selection probability equals the routing weight itself, which makes the
two terms coincide identically; `use_indicator` switches the load term to
a 0/1 selection indicator instead (a piecewise-constant quantity, so no
gradient flows through that variant).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, Tensor, _accum
from .errors import LossError, ShapeError


@dataclass(frozen=True)
class LossConfig:
    lambda_balance: float = 0.01
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.lambda_balance < 0:
            raise ValueError("lambda_balance must be nonnegative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass
class BatchRouting:
    """Routing weights of one mini-batch: B rows on the simplex."""

    alpha: Tensor  # (B, K)
    selected: list[tuple[int, ...]]

    def __post_init__(self):
        if self.alpha.value.ndim != 2 or len(self.selected) != self.alpha.value.shape[0]:
            raise ShapeError(
                f"alpha {self.alpha.value.shape} vs {len(self.selected)} selection rows"
            )

    @property
    def batch_size(self) -> int:
        return self.alpha.value.shape[0]

    @property
    def n_experts(self) -> int:
        return self.alpha.value.shape[1]


def task_loss(predictions: Tensor, targets, masks, task_kind: str, tape: Tape) -> Tensor:
    """Mean masked error over present (sample, task) entries.

    Regression: squared error. Classification: binary cross-entropy on
    logits (link applied inside, in log-space).
    """
    targets = np.asarray(targets, dtype=np.float64)
    masks = np.asarray(masks, dtype=np.float64)
    if predictions.value.shape != targets.shape or targets.shape != masks.shape:
        raise ShapeError(
            f"predictions {predictions.value.shape}, targets {targets.shape}, "
            f"masks {masks.shape} must agree"
        )
    count = masks.sum()
    if count == 0:
        raise LossError("every (sample, task) entry in the batch is masked out")
    if task_kind == "regression":
        diff = tape.sub(predictions, targets)
        return tape.scale(tape.sum(tape.mul(tape.square(diff), masks)), 1.0 / count)
    return _masked_bce_with_logits(predictions, targets, masks, count, tape)


def _masked_bce_with_logits(pred: Tensor, y, mask, count: float, tape: Tape) -> Tensor:
    z = pred.value
    per_entry = np.logaddexp(0.0, -np.abs(z)) + np.maximum(z, 0.0) - z * y
    value = float((per_entry * mask).sum() / count)

    def back(g):
        sig = 1.0 / (1.0 + np.exp(-z))
        _accum(pred, g * mask * (sig - y) / count)

    return tape._emit(np.asarray(value), back, pred)


def _dispersion(totals: Tensor, n_experts: int, epsilon: float, tape: Tape) -> Tensor:
    mean = tape.scale(tape.sum(totals), 1.0 / n_experts)
    centered = tape.sub(totals, mean)
    numerator = tape.scale(tape.sum(tape.square(centered)), 1.0 / n_experts)
    denominator = tape.add(tape.square(mean), epsilon)
    return tape.div(numerator, denominator)


def score_balance_loss(br: BatchRouting, epsilon: float, tape: Tape) -> Tensor:
    """Dispersion of the summed routing weights across experts."""
    totals = tape.sum_rows(br.alpha)
    return _dispersion(totals, br.n_experts, epsilon, tape)


def load_balance_loss(
    br: BatchRouting, epsilon: float, tape: Tape, use_indicator: bool = False
) -> Tensor:
    """Dispersion of accumulated selection probability across experts.

    With hard Top-k the selection probability of an unselected expert is
    exactly 0 and of a selected one is its weight, so the default mode
    coincides with the score balance term.
    """
    if use_indicator:
        indicator = np.zeros(br.alpha.value.shape)
        for b, sel in enumerate(br.selected):
            indicator[b, list(sel)] = 1.0
        totals = tape.sum_rows(Tensor(indicator))
    else:
        totals = tape.sum_rows(br.alpha)
    return _dispersion(totals, br.n_experts, epsilon, tape)


def total_loss(task: Tensor, score: Tensor, load: Tensor, cfg: LossConfig, tape: Tape) -> Tensor:
    """task + lambda * (score + load), with finiteness checks."""
    for name, t in (("task", task), ("score", score), ("load", load)):
        if not np.isfinite(t.value):
            raise LossError(f"{name} loss is not finite: {t.value}")
    return tape.add(task, tape.scale(tape.add(score, load), cfg.lambda_balance))
