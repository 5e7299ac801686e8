"""One-dimensional Gaussian-mixture-CDF normalizing flow.

The flow maps a standard-normal base sample z through the mixture CDF
F(z) = sum_i w_i * Phi((z - mu_i) / sigma_i), then affinely rescales the
[0, 1] output onto the symmetric return range (-g_max, g_max).  The map is
strictly increasing, so densities follow from the change-of-variables
formula and inversion reduces to bisection.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

SCALE_FLOOR = 1e-4
BISECT_TOL = 1e-10
BISECT_MAX_ITER = 200
BRACKET_LIMIT = 1e6


class OutOfSupportError(ValueError):
    """Queried return value lies outside the open interval (-g_max, g_max)."""


class ConvergenceError(RuntimeError):
    """Bisection bracket growth exceeded its limit."""


@dataclass(frozen=True)
class MixtureFlowParams:
    """Per-(state, action) flow parameters.

    weights must form a probability vector, scales are floored at
    ``SCALE_FLOOR`` and g_max must be positive.
    """

    weights: np.ndarray
    means: np.ndarray
    scales: np.ndarray
    g_max: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.asarray(self.means, dtype=float)
        s = np.asarray(self.scales, dtype=float)
        if not (w.shape == m.shape == s.shape) or w.ndim != 1 or w.size == 0:
            raise ValueError("weights, means and scales must be equal-length 1-D vectors")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")
        if np.any(s < SCALE_FLOOR):
            raise ValueError(f"scales must be >= {SCALE_FLOOR}")
        if not (np.isfinite(self.g_max) and self.g_max > 0):
            raise ValueError("g_max must be positive and finite")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(m)) and np.all(np.isfinite(s))):
            raise ValueError("parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "scales", s)
        object.__setattr__(self, "g_max", float(self.g_max))

    @property
    def n_components(self) -> int:
        return self.weights.size


@dataclass(frozen=True)
class ReturnSample:
    """A base draw z, its mapped return y and the log-density at y (nats)."""

    z: float
    y: float
    log_density: float


def _check_finite_z(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("z must be finite")
    return z


def mixture_cdf(params: MixtureFlowParams, z):
    """Mixture CDF sum_i w_i * Phi((z - mu_i) / sigma_i); strictly increasing."""
    z = _check_finite_z(z)
    t = (z[..., None] - params.means) / params.scales
    # clip away float round-off; the exact value lies in [0, 1]
    return np.clip(ndtr(t) @ params.weights, 0.0, 1.0)


def mixture_pdf(params: MixtureFlowParams, z):
    """Mixture PDF, the z-derivative of :func:`mixture_cdf`."""
    z = _check_finite_z(z)
    t = (z[..., None] - params.means) / params.scales
    phi = np.exp(-0.5 * t * t) / (math.sqrt(2.0 * math.pi) * params.scales)
    return phi @ params.weights


def rescale(u, g_max: float):
    """Affine map [0, 1] -> [-g_max, g_max]: 2*u*g_max - g_max."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0) or np.any(u > 1) or not np.all(np.isfinite(u)):
        raise ValueError("u must lie in [0, 1]")
    return 2.0 * u * g_max - g_max


def base_log_density(z):
    """Log-density of the standard-normal base distribution."""
    z = np.asarray(z, dtype=float)
    return -0.5 * z * z - LOG_SQRT_2PI


def forward_map(params: MixtureFlowParams, z):
    """Vectorized forward pass: returns (y, log_density) arrays."""
    y = rescale(mixture_cdf(params, z), params.g_max)
    log_density = (
        base_log_density(z)
        - np.log(mixture_pdf(params, z))
        - math.log(2.0 * params.g_max)
    )
    return y, log_density


def forward_sample(params: MixtureFlowParams, z: float) -> ReturnSample:
    """Map one base draw through the flow, with its exact log-density."""
    y, log_density = forward_map(params, float(z))
    return ReturnSample(z=float(z), y=float(y), log_density=float(log_density))


def invert_flow(params: MixtureFlowParams, y: float) -> float:
    """Invert the composed flow by bisection on the monotone map z -> y(z).

    The initial bracket [-10, 10] is doubled until it straddles the target;
    growth past |z| = 1e6 raises :class:`ConvergenceError`.
    """
    g = params.g_max
    if not (-g < y < g):
        raise OutOfSupportError(f"y={y} outside the open support (-{g}, {g})")
    lo, hi = -10.0, 10.0
    while float(forward_map(params, lo)[0]) > y:
        lo *= 2.0
        if -lo > BRACKET_LIMIT:
            raise ConvergenceError("bisection bracket exceeded |z| = 1e6")
    while float(forward_map(params, hi)[0]) < y:
        hi *= 2.0
        if hi > BRACKET_LIMIT:
            raise ConvergenceError("bisection bracket exceeded |z| = 1e6")
    for _ in range(BISECT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        ym = float(forward_map(params, mid)[0])
        if abs(ym - y) <= BISECT_TOL:
            return mid
        if ym < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def invert_flow_batch(params: MixtureFlowParams, y: np.ndarray) -> np.ndarray:
    """Vectorized bisection inversion for an array of in-support returns."""
    y = np.asarray(y, dtype=float)
    g = params.g_max
    if np.any(y <= -g) or np.any(y >= g):
        raise OutOfSupportError("some y values lie outside the open support")
    lo = np.full(y.shape, -10.0)
    hi = np.full(y.shape, 10.0)
    for _ in range(64):
        mask = forward_map(params, lo)[0] > y
        if not mask.any():
            break
        lo[mask] *= 2.0
        if np.any(-lo > BRACKET_LIMIT):
            raise ConvergenceError("bisection bracket exceeded |z| = 1e6")
    for _ in range(64):
        mask = forward_map(params, hi)[0] < y
        if not mask.any():
            break
        hi[mask] *= 2.0
        if np.any(hi > BRACKET_LIMIT):
            raise ConvergenceError("bisection bracket exceeded |z| = 1e6")
    for _ in range(BISECT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        ym = forward_map(params, mid)[0]
        if np.all(np.abs(ym - y) <= BISECT_TOL):
            return mid
        below = ym < y
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def density_at(params: MixtureFlowParams, y) -> np.ndarray:
    """Flow density at return value(s) y; zero outside (-g_max, g_max)."""
    y = np.asarray(y, dtype=float)
    flat_y = np.atleast_1d(y)
    out = np.zeros(flat_y.shape)
    inside = (flat_y > -params.g_max) & (flat_y < params.g_max)
    if inside.any():
        z = invert_flow_batch(params, flat_y[inside])
        out[inside] = np.exp(forward_map(params, z)[1])
    return out.reshape(y.shape) if y.ndim else float(out[0])
