"""Mechanized checks of the loss function's mathematical claims.

Covers the metric axioms of the PDF surrogate, its exact translation
invariance and |a|^(-1/2) pushforward-scaling behavior, measured (not
asserted) Bellman-pushforward ratios, the Bernoulli unbiased-sample-gradient
experiment by exhaustive binomial enumeration, and the base-sample-count
study on the branching toy MDP.
"""

import json
import math
from dataclasses import dataclass, asdict

import numpy as np

from . import agent, losses, network


@dataclass(frozen=True)
class PropertyReport:
    name: str
    trials: int
    max_violation: float
    passed: bool

    def to_json_line(self) -> str:
        return json.dumps(asdict(self))


def random_density(rng: np.random.Generator, n: int) -> np.ndarray:
    """Softmax-normalized Gaussian noise: a generic strictly positive density."""
    return network.softmax(rng.standard_normal(n))


def random_support(rng: np.random.Generator, n: int) -> np.ndarray:
    s = np.sort(rng.uniform(-5.0, 5.0, size=n))
    # nudge any exact duplicates apart so the support stays strictly increasing
    return s + np.arange(n) * 1e-12


def _support_size(rng: np.random.Generator) -> int:
    return int(rng.integers(32, 257))


def check_metric_axioms(n_trials: int, rng: np.random.Generator,
                        tol: float = 1e-12) -> PropertyReport:
    """Non-negativity, symmetry, identity of indiscernibles, triangle inequality."""
    worst = 0.0
    for _ in range(n_trials):
        n = _support_size(rng)
        s = random_support(rng, n)
        p1, p2, p3 = (random_density(rng, n) for _ in range(3))
        d12 = losses.surrogate_cramer_raw(s, p1, p2)
        d21 = losses.surrogate_cramer_raw(s, p2, p1)
        d13 = losses.surrogate_cramer_raw(s, p1, p3)
        d23 = losses.surrogate_cramer_raw(s, p2, p3)
        worst = max(worst, -d12)                              # non-negativity
        worst = max(worst, abs(d12 - d21))                    # symmetry
        worst = max(worst, losses.surrogate_cramer_raw(s, p1, p1))  # identity
        worst = max(worst, d13 - (d12 + d23))                 # triangle
    return PropertyReport("metric_axioms", n_trials, worst, worst <= tol)


def check_translation_scaling(n_trials: int, rng: np.random.Generator,
                              tol: float = 1e-12) -> PropertyReport:
    """Support shifts leave d unchanged; pushforward scaling gives |a|^(-1/2)*d."""
    worst = 0.0
    for _ in range(n_trials):
        n = _support_size(rng)
        s = random_support(rng, n)
        p1, p2 = random_density(rng, n), random_density(rng, n)
        d = losses.surrogate_cramer_raw(s, p1, p2)
        b = rng.uniform(-20.0, 20.0)
        worst = max(worst, abs(losses.surrogate_cramer_raw(s + b, p1, p2) - d))
        a = rng.choice([0.25, 0.5, 2.0, 4.0])
        d_scaled = losses.surrogate_cramer_raw(a * s, p1 / a, p2 / a)
        worst = max(worst, abs(d_scaled - d / math.sqrt(a)))
    return PropertyReport("translation_scaling", n_trials, worst, worst <= tol)


def measure_bellman_scaling(gammas, n_trials: int, rng: np.random.Generator):
    """Empirical distance ratios under the bootstrap pushforward (r, gamma).

    Returns rows (gamma, surrogate_ratio, exact_ratio).  The surrogate ratio
    is reported, not asserted; the exact Cramer (p=2) ratio is the classical
    sqrt(gamma) contraction.
    """
    rows = []
    for gamma in gammas:
        sur_ratios, ex_ratios = [], []
        for _ in range(n_trials):
            n = _support_size(rng)
            s = random_support(rng, n)
            p1, p2 = random_density(rng, n), random_density(rng, n)
            r = rng.uniform(-3.0, 3.0)
            s2, (q1, q2) = r + gamma * s, (p1 / gamma, p2 / gamma)
            sur_ratios.append(
                losses.surrogate_cramer_raw(s2, q1, q2)
                / losses.surrogate_cramer_raw(s, p1, p2)
            )
            pair_a = _pair(s, p1, p2)
            pair_b = _pair(s2, q1, q2)
            ex_ratios.append(
                losses.exact_cramer(pair_b).value / losses.exact_cramer(pair_a).value
            )
        rows.append((float(gamma), float(np.mean(sur_ratios)), float(np.max(ex_ratios))))
    return rows


def _pair(support, p, q):
    from .targets import AlignedPair
    return AlignedPair(support=support, predicted=p, target=q)


def bernoulli_true_loss(theta: np.ndarray, theta_star: float) -> np.ndarray:
    """d(B(theta*), B(theta)) = 2*(theta - theta*)^2 on the {0, 1} support."""
    return 2.0 * (theta - theta_star) ** 2


def bernoulli_expected_sample_loss(theta: np.ndarray, theta_star: float,
                                   m: int) -> np.ndarray:
    """Exact enumeration over all m-sample outcomes, binomially weighted."""
    total = np.zeros_like(np.asarray(theta, dtype=float))
    for k in range(m + 1):
        prob = math.comb(m, k) * theta_star ** k * (1.0 - theta_star) ** (m - k)
        total += prob * 2.0 * (theta - k / m) ** 2
    return total


def bernoulli_unbiasedness(theta_star: float, m: int,
                           theta_grid: np.ndarray | None = None):
    """Argmins of the expected sample loss and the true loss on a theta grid."""
    if not 0.0 <= theta_star <= 1.0:
        raise ValueError("theta_star must lie in [0, 1]")
    if m < 1:
        raise ValueError("m must be >= 1")
    if theta_grid is None:
        theta_grid = np.linspace(0.0, 1.0, 1001)
    sample_loss = bernoulli_expected_sample_loss(theta_grid, theta_star, m)
    true_loss = bernoulli_true_loss(theta_grid, theta_star)
    return (float(theta_grid[np.argmin(sample_loss)]),
            float(theta_grid[np.argmin(true_loss)]))


def sample_count_study(mdp, n_samples_list, repeats: int, config: agent.TrainConfig):
    """Final exact Cramer distance to MC ground truth per base-sample count.

    The per-run distance is the mean of the evaluation-time Cramer metric
    over the last quarter of the run: a single end-of-run snapshot is
    dominated by where in the target-sync cycle training happens to stop,
    while the window average reflects the converged fit quality.
    """
    rows = []
    for n in n_samples_list:
        dists = []
        for rep in range(repeats):
            cfg_doc = config.to_dict()
            cfg_doc["n_samples"] = int(n)
            cfg_doc["seed"] = config.seed + rep
            result = agent.train(mdp, agent.TrainConfig(**cfg_doc))
            tail = result.metrics[-max(1, len(result.metrics) // 4):]
            dists.append(float(np.mean([row.eval_cramer_mean for row in tail])))
        rows.append((int(n), float(np.mean(dists))))
    return rows


def run_all_checks(n_trials: int, seed: int = 0) -> list[PropertyReport]:
    """The asserted property suite (the Bellman ratios are reported separately)."""
    rng = np.random.default_rng(seed)
    reports = [
        check_metric_axioms(n_trials, rng),
        check_translation_scaling(n_trials, rng),
        _bernoulli_report(),
    ]
    return reports


def _bernoulli_report() -> PropertyReport:
    worst = 0.0
    trials = 0
    for theta_star in np.arange(0.1, 0.95, 0.1):
        for m in (1, 2, 5, 10):
            sample_min, true_min = bernoulli_unbiasedness(float(theta_star), m)
            worst = max(worst, abs(sample_min - true_min))
            trials += 1
    return PropertyReport("bernoulli_unbiasedness", trials, worst, worst <= 1e-3)
