"""Coarse-to-fine weakly supervised segmentation from positive/negative coarse labels."""

__version__ = "0.1.0"

from .core import (
    IGNORE_LABEL,
    ComplementaryMatrix,
    EmptyAnnotationError,
    LabelMap,
    ProbabilityMap,
    Region,
    TransitionField,
    apply_complementary_transpose,
    apply_transition,
    identity_deviation,
    identity_field,
    make_complementary_matrix,
    normalize_transition_field,
)
