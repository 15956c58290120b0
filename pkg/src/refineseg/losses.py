"""Training objectives evaluated only over annotated pixels.

The positive channel scores transition-adjusted predictions against partial
target labels with a cross-entropy / soft-Dice hybrid; the negative channel
maps adjusted predictions through the complementary matrix and scores them
against "is not this class" labels; an identity-pull regularizer keeps the
positive transition fields from drifting into trivial relabelings.

All losses are differentiable in the probability inputs. Reductions are plain
means/sums in pixel-major order, so results are reproducible bit for bit.
Out-of-region pixels are sliced away before any arithmetic, which makes the
losses exactly independent of unannotated values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np
import torch

from .core import (
    IGNORE_LABEL,
    ComplementaryMatrix,
    EmptyAnnotationError,
    LabelMap,
    ProbabilityMap,
    Region,
    TransitionField,
    _tensor_of,
    apply_complementary_transpose,
    apply_transition,
    identity_deviation,
)

LOG_CLAMP_EPS = 1e-8
DICE_SMOOTH_EPS = 1e-6

ArrayLike = Union[torch.Tensor, np.ndarray]


def _label_tensor(labels) -> torch.Tensor:
    if isinstance(labels, LabelMap):
        return labels.to_tensor()
    t = torch.as_tensor(labels)
    if not t.dtype.is_floating_point and t.dtype != torch.bool:
        return t.long()
    raise ValueError(f"labels must be an integer array, got dtype {t.dtype}")


def _region_tensor(region, labels_t: torch.Tensor) -> torch.Tensor:
    if region is None:
        return labels_t != IGNORE_LABEL
    if isinstance(region, Region):
        region = region.mask
    t = torch.as_tensor(region)
    if t.dtype != torch.bool:
        raise ValueError(f"region mask must be boolean, got dtype {t.dtype}")
    if t.shape != labels_t.shape:
        raise ValueError(f"region shape {tuple(t.shape)} does not match labels {tuple(labels_t.shape)}")
    return t


def _extract_region(probs, labels, region):
    """Slice (q, y) down to annotated pixels; everything else never enters
    the computation."""
    q = _tensor_of(probs)
    y = _label_tensor(labels)
    if q.shape[:-1] != y.shape:
        raise ValueError(
            f"shape mismatch: probabilities {tuple(q.shape)} vs labels {tuple(y.shape)}"
        )
    mask = _region_tensor(region, y)
    if not mask.any():
        raise EmptyAnnotationError("empty annotation: the region contains no pixels")
    q_sel = q[mask]
    y_sel = y[mask]
    n_classes = q.shape[-1]
    if y_sel.min() < 0 or y_sel.max() >= n_classes:
        raise ValueError(
            f"labels inside the region must lie in [0, {n_classes}); "
            f"found {int(y_sel.min())}..{int(y_sel.max())}"
        )
    return q_sel, y_sel


def partial_ce(probs, labels, region=None) -> torch.Tensor:
    """Mean negative log-probability of the annotated class over the region."""
    q_sel, y_sel = _extract_region(probs, labels, region)
    picked = q_sel.gather(-1, y_sel.unsqueeze(-1)).squeeze(-1)
    return -picked.clamp(LOG_CLAMP_EPS, 1.0).log().mean()


def partial_dice(probs, labels, region=None) -> torch.Tensor:
    """Soft Dice over the region, classes pooled into a single overlap ratio.

    Numerator and denominator sum over region pixels and classes jointly;
    the smoothing epsilon sits in the denominator only.
    """
    q_sel, y_sel = _extract_region(probs, labels, region)
    one_hot = torch.nn.functional.one_hot(y_sel, q_sel.shape[-1]).to(q_sel.dtype)
    numerator = 2.0 * (q_sel * one_hot).sum()
    denominator = (q_sel + one_hot).sum() + DICE_SMOOTH_EPS
    return 1.0 - numerator / denominator


def positive_loss(adjusted: Sequence, labels: Sequence, alpha=0.6, beta=0.4):
    """Weighted CE+Dice hybrid summed over positive annotation strategies.

    Returns ``(total, components)`` where components is one ``(ce, dice)``
    pair per strategy. ``alpha``/``beta`` may be scalars (shared by all
    strategies) or per-strategy sequences.
    """
    if len(adjusted) != len(labels):
        raise ValueError(f"got {len(adjusted)} adjusted maps but {len(labels)} label maps")
    alphas = _per_strategy(alpha, len(adjusted), "alpha")
    betas = _per_strategy(beta, len(adjusted), "beta")
    components = []
    total = torch.zeros(())
    for adj, lab, a, b in zip(adjusted, labels, alphas, betas):
        if isinstance(lab, LabelMap) and lab.semantics == "negative_coarse":
            raise ValueError("positive_loss received a negative_coarse label map")
        ce = partial_ce(adj, lab)
        dice = partial_dice(adj, lab)
        components.append((ce, dice))
        total = total + a * ce + b * dice
    return total, components


def negative_loss(adjusted: Sequence, labels: Sequence, matrix) -> torch.Tensor:
    """Cross-entropy of complementary-transformed predictions against
    "not this class" labels, summed over negative strategies."""
    if len(adjusted) != len(labels):
        raise ValueError(f"got {len(adjusted)} adjusted maps but {len(labels)} label maps")
    total = torch.zeros(())
    for adj, lab in zip(adjusted, labels):
        if isinstance(lab, LabelMap) and lab.semantics != "negative_coarse":
            raise ValueError(f"negative_loss requires negative_coarse labels, got {lab.semantics}")
        flipped = apply_complementary_transpose(matrix, adj)
        total = total + partial_ce(flipped, lab)
    return total


class LossWeights(NamedTuple):
    alpha: tuple
    beta: tuple
    lam: float


@dataclass(frozen=True)
class LossBreakdown:
    """Itemized training objective: total plus every term that built it."""

    total: torch.Tensor
    per_strategy_positive: list  # [(ce, dice), ...]
    per_strategy_negative: list
    regularization: torch.Tensor
    weights: LossWeights

    def check(self, atol: float = 1e-6) -> "LossBreakdown":
        recombined = float(self.regularization) * self.weights.lam
        for (ce, dice), a, b in zip(self.per_strategy_positive, self.weights.alpha, self.weights.beta):
            recombined += a * float(ce) + b * float(dice)
        for neg in self.per_strategy_negative:
            recombined += float(neg)
        if abs(float(self.total) - recombined) > atol:
            raise ValueError(
                f"loss breakdown is inconsistent: total={float(self.total)} vs parts={recombined}"
            )
        return self

    def as_floats(self) -> dict:
        """Flat component dict for logging (``pos{i}_ce``, ``neg{j}``, ...)."""
        out = {"total": float(self.total)}
        for i, (ce, dice) in enumerate(self.per_strategy_positive):
            out[f"pos{i}_ce"] = float(ce)
            out[f"pos{i}_dice"] = float(dice)
        for j, neg in enumerate(self.per_strategy_negative):
            out[f"neg{j}"] = float(neg)
        out["reg"] = float(self.regularization)
        return out


def total_loss(probs, fields_pos: Sequence, fields_neg: Sequence,
               labels_pos: Sequence, labels_neg: Sequence, matrix,
               alpha=0.6, beta=0.4, lam: float = 0.2,
               regularize_negative: bool = False) -> LossBreakdown:
    """Full objective: positive hybrid + negative channel + identity pull.

    Positive and negative strategy lists must align pairwise with their
    label lists. The identity regularizer covers the positive fields only
    unless ``regularize_negative`` is set.
    """
    if lam < 0:
        raise ValueError(f"regularization weight must be >= 0, got {lam}")
    if len(fields_pos) != len(labels_pos):
        raise ValueError(f"{len(fields_pos)} positive fields vs {len(labels_pos)} labels")
    if len(fields_neg) != len(labels_neg):
        raise ValueError(f"{len(fields_neg)} negative fields vs {len(labels_neg)} labels")

    adjusted_pos = [apply_transition(f, probs) for f in fields_pos]
    pos_total, pos_components = positive_loss(adjusted_pos, labels_pos, alpha, beta)

    neg_components = []
    for f, lab in zip(fields_neg, labels_neg):
        adj = apply_transition(f, probs)
        neg_components.append(negative_loss([adj], [lab], matrix))

    reg_fields = list(fields_pos) + (list(fields_neg) if regularize_negative else [])
    reg = torch.zeros(())
    for f in reg_fields:
        reg = reg + identity_deviation(f)

    total = pos_total + lam * reg
    for neg in neg_components:
        total = total + neg

    alphas = _per_strategy(alpha, len(fields_pos), "alpha")
    betas = _per_strategy(beta, len(fields_pos), "beta")
    return LossBreakdown(
        total=total,
        per_strategy_positive=pos_components,
        per_strategy_negative=neg_components,
        regularization=reg,
        weights=LossWeights(alpha=tuple(alphas), beta=tuple(betas), lam=float(lam)),
    )


def _per_strategy(value, n: int, name: str):
    if isinstance(value, (int, float)):
        values = [float(value)] * n
    else:
        values = [float(v) for v in value]
        if len(values) != n:
            raise ValueError(f"{name} has {len(values)} entries for {n} strategies")
    if any(v < 0 for v in values):
        raise ValueError(f"{name} weights must be >= 0")
    return values
