"""Exact Cramer distance and its PDF-based surrogate on a shared grid.

The surrogate is the weighted L2 norm of the density difference,
L = (1/N^2) * sqrt(sum_i (p_i - q_i)^2 * sum_j |y_i - y_j|); the inner sum
is the pairwise-distance weight w_i, computed in O(N) by prefix sums.
"""

import math
from dataclasses import dataclass

import numpy as np

from .targets import AlignedPair


@dataclass(frozen=True)
class LossValue:
    value: float
    kind: str

    def __post_init__(self):
        if self.kind not in ("exact", "surrogate"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if not (np.isfinite(self.value) and self.value >= 0):
            raise ValueError("loss value must be finite and non-negative")


def pairwise_abs_weights(support) -> np.ndarray:
    """w_i = sum_j |y_i - y_j| via prefix sums; support must be sorted."""
    y = np.asarray(support, dtype=float)
    n = y.size
    prefix = np.concatenate([[0.0], np.cumsum(y)])
    idx = np.arange(n)
    # sum over j<=i of (y_i - y_j) plus sum over j>i of (y_j - y_i)
    left = (idx + 1) * y - prefix[1:]
    right = (prefix[n] - prefix[1:]) - (n - 1 - idx) * y
    return left + right


def cumtrapz(values, support) -> np.ndarray:
    """Cumulative trapezoid integral starting at 0."""
    values = np.asarray(values, dtype=float)
    support = np.asarray(support, dtype=float)
    steps = 0.5 * np.diff(support) * (values[:-1] + values[1:])
    return np.concatenate([[0.0], np.cumsum(steps)])


def exact_cramer(pair: AlignedPair, p: float = 2.0) -> LossValue:
    """C_p between the CDFs obtained by cumulative trapezoid integration."""
    cdf_p = cumtrapz(pair.predicted, pair.support)
    cdf_q = cumtrapz(pair.target, pair.support)
    diff = np.abs(cdf_p - cdf_q) ** p
    value = float(np.trapezoid(diff, pair.support)) ** (1.0 / p)
    return LossValue(value=value, kind="exact")


def surrogate_cramer_raw(support, predicted, target) -> float:
    """Surrogate distance on raw density vectors over a sorted support."""
    w = pairwise_abs_weights(support)
    n = np.asarray(support).size
    diff = np.asarray(predicted, dtype=float) - np.asarray(target, dtype=float)
    s = float(np.sum(diff * diff * w))
    return math.sqrt(s) / (n * n)


def surrogate_cramer(pair: AlignedPair) -> LossValue:
    return LossValue(value=surrogate_cramer_raw(pair.support, pair.predicted, pair.target),
                     kind="surrogate")


def surrogate_gradient(pair: AlignedPair) -> np.ndarray:
    """d(surrogate)/d(predicted_i); the zero vector at the minimum."""
    w = pairwise_abs_weights(pair.support)
    n = pair.support.size
    diff = pair.predicted - pair.target
    s = float(np.sum(diff * diff * w))
    if s == 0.0:
        return np.zeros(n)
    return diff * w / (n * n * math.sqrt(s))


def exact_cramer_gradient(pair: AlignedPair, p: float = 2.0) -> np.ndarray:
    """d(exact_cramer)/d(predicted_i) through the cumulative trapezoid CDFs."""
    support = pair.support
    cdf_p = cumtrapz(pair.predicted, support)
    cdf_q = cumtrapz(pair.target, support)
    diff = cdf_p - cdf_q
    value = float(np.trapezoid(np.abs(diff) ** p, support)) ** (1.0 / p)
    if value == 0.0:
        return np.zeros(support.size)
    # trapezoid quadrature weights over the grid
    v = np.zeros(support.size)
    ds = np.diff(support)
    v[:-1] += 0.5 * ds
    v[1:] += 0.5 * ds
    # dC/dCDF_m, then chain through the cumulative trapezoid
    g = v * p * np.abs(diff) ** (p - 1.0) * np.sign(diff) * value ** (1.0 - p) / p
    rev = np.concatenate([np.cumsum(g[::-1])[::-1], [0.0]])
    a = np.zeros(support.size)
    b = np.zeros(support.size)
    a[1:] = 0.5 * ds
    b[:-1] = 0.5 * ds
    return a * rev[:-1] + b * rev[1:]
