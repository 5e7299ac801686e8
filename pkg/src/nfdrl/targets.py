"""Bootstrap target construction and support alignment.

The bootstrap map r + gamma*y is treated as one more affine flow layer, so
target samples carry exact log-densities (the extra Jacobian term is just
-log(gamma)).  Terminal transitions replace the Dirac at r by a sharp
Gaussian.  Predicted and target densities are then aligned on one shared
symmetric grid: the predicted side by piecewise-linear interpolation of its
analytic (return, density) pairs, the target side by a Gaussian KDE over
the target samples.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import flows
from .flows import MixtureFlowParams, ReturnSample

SUPPORT_FLOOR = 1e-3


@dataclass(frozen=True)
class TargetSampleSet:
    """Samples of the bootstrapped target distribution with log-densities."""

    returns: np.ndarray
    log_densities: np.ndarray
    terminal: bool

    def __post_init__(self):
        r = np.asarray(self.returns, dtype=float)
        ld = np.asarray(self.log_densities, dtype=float)
        if r.shape != ld.shape or r.ndim != 1:
            raise ValueError("returns and log_densities must be equal-length 1-D vectors")
        if not np.all(np.isfinite(ld)):
            raise ValueError("log_densities must be finite")
        object.__setattr__(self, "returns", r)
        object.__setattr__(self, "log_densities", ld)


@dataclass(frozen=True)
class AlignedPair:
    """Predicted and target densities evaluated on one shared support grid."""

    support: np.ndarray
    predicted: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.support, dtype=float)
        p = np.asarray(self.predicted, dtype=float)
        q = np.asarray(self.target, dtype=float)
        if not (s.shape == p.shape == q.shape) or s.ndim != 1:
            raise ValueError("support, predicted and target must be equal-length 1-D vectors")
        if np.any(np.diff(s) <= 0):
            raise ValueError("support must be strictly increasing")
        if np.any(p < 0) or np.any(q < 0) or not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
            raise ValueError("densities must be non-negative and finite")
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "predicted", p)
        object.__setattr__(self, "target", q)


def bootstrap_sample(next_sample: ReturnSample, r: float, gamma: float):
    """Push one next-state return sample through the bootstrap flow r + gamma*y."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return r + gamma * next_sample.y, next_sample.log_density - math.log(gamma)


def bootstrap_map(returns, log_densities, r: float, gamma: float):
    """Vectorized bootstrap pushforward with its log-Jacobian correction."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    returns = np.asarray(returns, dtype=float)
    log_densities = np.asarray(log_densities, dtype=float)
    return r + gamma * returns, log_densities - math.log(gamma)


def terminal_target(r: float, sigma: float, z_batch) -> TargetSampleSet:
    """Gaussian N(r, sigma) stand-in for the terminal Dirac at r."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    z = np.asarray(z_batch, dtype=float)
    returns = r + sigma * z
    log_densities = flows.base_log_density(z) - math.log(sigma)
    return TargetSampleSet(returns=returns, log_densities=log_densities, terminal=True)


def kde_evaluate(samples, bandwidth: float, queries) -> np.ndarray:
    """Gaussian-kernel KDE of the samples evaluated at the query points."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("samples must be non-empty")
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    queries = np.asarray(queries, dtype=float)
    t = (queries[..., None] - samples) / bandwidth
    k = np.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)
    return k.mean(axis=-1) / bandwidth


def interp_density(sample_returns, sample_densities, queries) -> np.ndarray:
    """Piecewise-linear interpolation of analytic (return, density) pairs.

    Zero outside the convex hull of the sample returns.
    """
    order = np.argsort(sample_returns)
    xs = np.asarray(sample_returns, dtype=float)[order]
    ys = np.asarray(sample_densities, dtype=float)[order]
    return np.interp(np.asarray(queries, dtype=float), xs, ys, left=0.0, right=0.0)


def make_support(all_returns, grid_size: int, bandwidth: float) -> np.ndarray:
    """Uniform symmetric grid [-c, c] covering every return, padded by 3h."""
    c = float(np.max(np.abs(all_returns))) + 3.0 * bandwidth
    c = max(c, SUPPORT_FLOOR)
    return np.linspace(-c, c, grid_size)


def align(predicted, target: TargetSampleSet, grid_size: int, bandwidth: float) -> AlignedPair:
    """Evaluate predicted and target densities on one shared uniform grid.

    ``predicted`` is a (returns, densities) pair from the analytic flow; the
    target side is smoothed by a Gaussian KDE over its samples.
    """
    pred_returns, pred_densities = predicted
    pred_returns = np.asarray(pred_returns, dtype=float)
    if pred_returns.size == 0 or target.returns.size == 0:
        raise ValueError("both sample sets must be non-empty")
    support = make_support(
        np.concatenate([pred_returns, target.returns]), grid_size, bandwidth
    )
    p = interp_density(pred_returns, pred_densities, support)
    q = kde_evaluate(target.returns, bandwidth, support)
    return AlignedPair(support=support, predicted=p, target=q)


def build_target(agent_flows, transition, z_batch, config) -> AlignedPair:
    """Construct the aligned (predicted, target) pair for one transition.

    ``agent_flows`` must expose ``predicted_flow(state, action)`` for the
    online network and ``target_flow(state, action)`` plus ``n_actions`` for
    the frozen target network.  All target-side values are constants with
    respect to the learnable parameters.
    """
    z = np.asarray(z_batch, dtype=float)
    pred_params = agent_flows.predicted_flow(transition.state, transition.action)
    pred_y, pred_ld = flows.forward_map(pred_params, z)

    if transition.done:
        target = terminal_target(transition.reward, config.final_reward_std, z)
    else:
        best_a, best_q = 0, -np.inf
        for a in range(agent_flows.n_actions):
            y_a, _ = flows.forward_map(
                agent_flows.target_flow(transition.next_state, a), z
            )
            q_a = float(y_a.mean())
            if q_a > best_q:
                best_a, best_q = a, q_a
        y_next, ld_next = flows.forward_map(
            agent_flows.target_flow(transition.next_state, best_a), z
        )
        y_hat, ld_hat = bootstrap_map(y_next, ld_next, transition.reward, config.gamma)
        target = TargetSampleSet(returns=y_hat, log_densities=ld_hat, terminal=False)

    return align(
        (pred_y, np.exp(pred_ld)), target, config.grid_size, config.bandwidth
    )
