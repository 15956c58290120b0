"""Hand-rolled reference implementations used to cross-check the library.

Everything here is written as explicit Python loops so it stays independent
of the vectorized code paths it verifies.
"""

import math

import numpy as np


def transition_oracle(field: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Per-pixel matrix-vector product, one scalar multiply at a time."""
    h, w, n = probs.shape
    out = np.zeros_like(probs)
    for u in range(h):
        for v in range(w):
            for m in range(n):
                acc = 0.0
                for k in range(n):
                    acc += field[u, v, m, k] * probs[u, v, k]
                out[u, v, m] = acc
    return out


def complementary_oracle(matrix: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Distribution over complementary labels via an explicit sum that skips
    the "own class" term, rather than relying on the zero diagonal."""
    n = u.shape[0]
    v = np.zeros(n)
    for k in range(n):
        for m in range(n):
            if m != k:
                v[k] += matrix[m, k] * u[m]
    return v


def dense_ce_oracle(q: np.ndarray, y: np.ndarray, clamp: float = 1e-8) -> float:
    """Full-image cross-entropy by per-pixel loops (no masking, no batching)."""
    h, w = y.shape
    total = 0.0
    for u in range(h):
        for v in range(w):
            total += -math.log(min(max(float(q[u, v, int(y[u, v])]), clamp), 1.0))
    return total / (h * w)


def simplex_mesh(n_classes: int, steps: int):
    """All lattice distributions with entries in multiples of 1/steps."""
    points = []

    def rec(prefix, remaining):
        if len(prefix) == n_classes - 1:
            points.append(prefix + [remaining])
            return
        for c in range(remaining + 1):
            rec(prefix + [c], remaining - c)

    rec([], steps)
    return [np.array(p, dtype=np.float64) / steps for p in points]


def finite_difference_gradient(fn, x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Central-difference gradient of a scalar function of an array."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = fn(x)
        flat[i] = orig - step
        lo = fn(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * step)
    return grad


def dice_oracle(pred: np.ndarray, gt: np.ndarray, class_id: int) -> float:
    """Set-overlap Dice by explicit pixel counting."""
    p = g = both = 0
    for u in range(pred.shape[0]):
        for v in range(pred.shape[1]):
            in_p = pred[u, v] == class_id
            in_g = gt[u, v] == class_id
            p += in_p
            g += in_g
            both += in_p and in_g
    if p == 0 and g == 0:
        return 1.0
    if p == 0 or g == 0:
        return 0.0
    return 2.0 * both / (p + g)
