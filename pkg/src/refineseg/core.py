"""Domain types and per-pixel transition-matrix algebra.

Array conventions (leading batch dimensions are allowed everywhere):

    label map            integer ``[H, W]``, value 255 = unannotated
    probability map      float ``[..., L]``, one distribution per pixel
    transition field     float ``[..., L, L]``; entry ``[m, k]`` is the
                         probability of observing coarse label ``m`` when the
                         true class is ``k`` (columns sum to 1)
    complementary matrix float ``[L, L]``, zero diagonal, columns sum to 1

Classes are 0-based with 0 = background. Everything in this module is a pure
function of its inputs and safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch

IGNORE_LABEL = 255

LABEL_SEMANTICS = ("ground_truth", "positive_coarse", "negative_coarse")


class EmptyAnnotationError(ValueError):
    """A loss/region was requested over zero annotated pixels."""


def _tensor_of(x) -> torch.Tensor:
    """Accept raw tensors, numpy arrays, or the typed wrappers below."""
    if isinstance(x, (ProbabilityMap, TransitionField, ComplementaryMatrix)):
        x = x.data
    return torch.as_tensor(x)


@dataclass(frozen=True)
class LabelMap:
    """Integer class map with an explicit "unannotated" sentinel (255).

    ``semantics`` distinguishes how values are read: for ``negative_coarse``
    maps, value ``m`` at a pixel asserts the true class is *not* ``m``.
    """

    data: np.ndarray
    n_classes: int
    semantics: str = "ground_truth"

    def validate(self) -> "LabelMap":
        d = np.asarray(self.data)
        if d.ndim != 2 or not np.issubdtype(d.dtype, np.integer):
            raise ValueError(f"label map must be a 2-D integer array, got {d.dtype} {d.shape}")
        if self.semantics not in LABEL_SEMANTICS:
            raise ValueError(f"unknown label semantics {self.semantics!r}")
        if not 2 <= self.n_classes <= IGNORE_LABEL:
            raise ValueError(f"n_classes must be in [2, {IGNORE_LABEL}], got {self.n_classes}")
        values = d[d != IGNORE_LABEL]
        if values.size and (values.min() < 0 or values.max() >= self.n_classes):
            raise ValueError(
                f"label values must lie in [0, {self.n_classes}) or be {IGNORE_LABEL}; "
                f"found {int(values.min())}..{int(values.max())}"
            )
        return self

    @property
    def shape(self):
        return self.data.shape

    def region(self) -> "Region":
        """Annotated pixels (everything that is not the sentinel)."""
        return Region(np.asarray(self.data) != IGNORE_LABEL)

    def to_tensor(self) -> torch.Tensor:
        return torch.from_numpy(np.ascontiguousarray(self.data).astype(np.int64))


@dataclass(frozen=True)
class Region:
    """Boolean pixel mask selecting the annotated part of a label map."""

    mask: np.ndarray

    def validate(self) -> "Region":
        m = np.asarray(self.mask)
        if m.ndim != 2 or m.dtype != bool:
            raise ValueError(f"region mask must be a 2-D boolean array, got {m.dtype} {m.shape}")
        return self

    @property
    def n_pixels(self) -> int:
        return int(np.asarray(self.mask).sum())

    def to_tensor(self) -> torch.Tensor:
        return torch.from_numpy(np.ascontiguousarray(self.mask))


@dataclass(frozen=True)
class ProbabilityMap:
    """Per-pixel distribution over classes, stored ``[..., L]``."""

    data: torch.Tensor

    def validate(self, atol: float = 1e-5) -> "ProbabilityMap":
        d = _tensor_of(self)
        if d.ndim < 1:
            raise ValueError("probability map needs at least a class axis")
        if not torch.isfinite(d).all():
            raise ValueError("probability map contains non-finite entries")
        if d.min() < -atol or d.max() > 1 + atol:
            raise ValueError("probability map entries must lie in [0, 1]")
        sums = d.sum(dim=-1)
        worst = (sums - 1).abs().max()
        if worst > atol:
            raise ValueError(f"per-pixel probabilities must sum to 1 (max deviation {worst:.3e})")
        return self

    @property
    def n_classes(self) -> int:
        return int(self.data.shape[-1])


@dataclass(frozen=True)
class TransitionField:
    """Per-pixel column-stochastic matrices, stored ``[..., L, L]``.

    ``strategy_id`` names the annotation strategy the field serves (e.g.
    ``"pos0"``); it is bookkeeping only and does not affect the math.
    """

    data: torch.Tensor
    strategy_id: Optional[str] = None

    def validate(self, atol: float = 1e-5) -> "TransitionField":
        d = _tensor_of(self)
        if d.ndim < 2 or d.shape[-1] != d.shape[-2]:
            raise ValueError(f"transition field must end in square class axes, got {tuple(d.shape)}")
        if not torch.isfinite(d).all():
            raise ValueError("transition field contains non-finite entries")
        if d.min() < -atol or d.max() > 1 + atol:
            raise ValueError("transition entries must lie in [0, 1]")
        col_sums = d.sum(dim=-2)
        worst = (col_sums - 1).abs().max()
        if worst > atol:
            raise ValueError(f"transition columns must sum to 1 (max deviation {worst:.3e})")
        return self

    @property
    def n_classes(self) -> int:
        return int(self.data.shape[-1])


@dataclass(frozen=True)
class ComplementaryMatrix:
    """Global class-flip matrix: entry ``[m, k]`` is the probability of
    drawing complementary label ``m`` for true class ``k``; the diagonal is
    zero because a class is never its own complement."""

    data: torch.Tensor

    def validate(self, atol: float = 1e-6) -> "ComplementaryMatrix":
        d = _tensor_of(self)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError(f"complementary matrix must be square, got {tuple(d.shape)}")
        if d.diagonal().abs().max() > 0:
            raise ValueError("complementary matrix must have a zero diagonal")
        if d.min() < 0 or d.max() > 1:
            raise ValueError("complementary matrix entries must lie in [0, 1]")
        worst = (d.sum(dim=0) - 1).abs().max()
        if worst > atol:
            raise ValueError(f"complementary columns must sum to 1 (max deviation {worst:.3e})")
        return self

    @property
    def n_classes(self) -> int:
        return int(self.data.shape[0])


def normalize_transition_field(logits, strategy_id: Optional[str] = None) -> TransitionField:
    """Turn raw per-pixel ``[..., L, L]`` logits into a valid transition field.

    Softmax runs along the observed-label axis for each fixed true class, so
    every column of the result is a distribution.
    """
    t = _tensor_of(logits)
    if t.ndim < 2 or t.shape[-1] != t.shape[-2]:
        raise ValueError(f"transition logits must end in square class axes, got {tuple(t.shape)}")
    finite = torch.isfinite(t)
    if not finite.all():
        idx = (~finite).nonzero()[0].tolist()
        raise ValueError(f"non-finite transition logit at index {idx}")
    return TransitionField(torch.softmax(t, dim=-2), strategy_id=strategy_id)


def apply_transition(field, probs) -> ProbabilityMap:
    """Push per-pixel class distributions through per-pixel transition matrices.

    At every pixel ``out[m] = sum_k field[m, k] * probs[k]``, i.e. the
    predicted distribution over *observed coarse* labels. Column-stochastic
    fields preserve normalization.
    """
    a = _tensor_of(field)
    p = _tensor_of(probs)
    if a.shape[:-1] != p.shape:
        raise ValueError(
            f"shape mismatch: field {tuple(a.shape)} is incompatible with probabilities {tuple(p.shape)}"
        )
    return ProbabilityMap(torch.einsum("...mk,...k->...m", a, p))


def make_complementary_matrix(n_classes: int, mode: str = "uniform",
                              dtype: torch.dtype = torch.float32) -> ComplementaryMatrix:
    """Build the global complementary-label matrix.

    ``uniform`` assigns equal probability 1/(L-1) to every wrong class, the
    standard assumption when nothing is known about annotator behaviour.
    """
    if n_classes < 2:
        raise ValueError(f"need at least 2 classes for a complementary label, got {n_classes}")
    if mode != "uniform":
        raise ValueError(f"unknown complementary matrix mode {mode!r}")
    m = torch.full((n_classes, n_classes), 1.0 / (n_classes - 1), dtype=dtype)
    m.fill_diagonal_(0.0)
    return ComplementaryMatrix(m)


def apply_complementary_transpose(matrix, probs) -> ProbabilityMap:
    """Map a distribution over true classes to one over complementary labels.

    Computes ``v[k] = sum_m matrix[m, k] * probs[m]`` per pixel (the transpose
    acting on the class axis). When the inputs are distributions and the
    matrix is the uniform complementary matrix, outputs are distributions too;
    this is checked and violations are rejected.
    """
    m = _tensor_of(matrix)
    u = _tensor_of(probs)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"complementary matrix must be square, got {tuple(m.shape)}")
    if u.shape[-1] != m.shape[0]:
        raise ValueError(
            f"shape mismatch: matrix is {tuple(m.shape)} but probabilities have {u.shape[-1]} classes"
        )
    v = torch.einsum("mk,...m->...k", m, u)
    with torch.no_grad():
        in_sums = u.sum(dim=-1)
        is_distribution = (in_sums - 1).abs() <= 1e-5
        if is_distribution.any():
            worst = (v.sum(dim=-1)[is_distribution] - 1).abs().max()
            if worst > 1e-5:
                raise ValueError(
                    f"complementary transform broke normalization (max deviation {worst:.3e}); "
                    "the matrix is not doubly stochastic"
                )
    return ProbabilityMap(v)


def identity_deviation(field) -> torch.Tensor:
    """Mean over pixels of the squared Frobenius distance to the identity.

    Zero exactly when every per-pixel matrix is the identity; averaging (not
    summing) over pixels keeps the value independent of image size.
    """
    a = _tensor_of(field)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"transition field must end in square class axes, got {tuple(a.shape)}")
    eye = torch.eye(a.shape[-1], dtype=a.dtype, device=a.device)
    per_pixel = (a - eye).square().sum(dim=(-2, -1))
    return per_pixel.mean()


def identity_field(height: int, width: int, n_classes: int,
                   dtype: torch.dtype = torch.float32) -> TransitionField:
    """Constant field of identity matrices (the "trust the prediction" field)."""
    eye = torch.eye(n_classes, dtype=dtype)
    return TransitionField(eye.expand(height, width, n_classes, n_classes).clone(),
                           strategy_id="identity")
