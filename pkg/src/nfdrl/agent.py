"""Training loop: replay buffer, epsilon-greedy acting, batched loss/grad
steps against a periodically synced target network, and evaluation helpers.
"""

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import envs, flows, losses, network
from .envs import TabularMdp, Transition
from .flows import MixtureFlowParams
from .network import NetworkParams


@dataclass
class TrainConfig:
    """Hyperparameters; defaults are desk-scale, the paper-scale values for
    Atari live in the same fields (see the hyperparameter docs in README)."""

    total_timesteps: int = 30_000
    learning_rate: float = 1e-3
    max_norm: float = 3.0
    num_envs: int = 1
    buffer_size: int = 10_000
    gamma: float | None = None          # None: use the environment's gamma
    # syncing every training step lets the bootstrap chase its own drift at
    # gamma near 1; a staler target keeps the learned supports anchored
    target_network_frequency: int = 100
    batch_size: int = 32
    start_e: float = 1.0
    end_e: float = 0.01
    exploration_fraction: float = 0.2
    learning_starts: int = 500
    train_frequency: int = 4
    hidden_size_1: int = 64
    hidden_size_2: int = 64
    n_flows: int = 1
    n_components: int = 4
    n_samples: int = 100
    final_reward_variance: float = 0.1
    bandwidth: float = 0.05
    loss_kind: str = "surrogate"
    grid_size: int = 256
    seed: int = 0
    eval_interval: int = 1_000

    def __post_init__(self):
        if not (0.0 < self.end_e <= self.start_e <= 1.0):
            raise ValueError("epsilon schedule requires 0 < end_e <= start_e <= 1")
        if self.gamma is not None and not (0.0 < self.gamma <= 1.0):
            raise ValueError("gamma must lie in (0, 1]")
        if self.n_components < 1:
            raise ValueError("n_components must be >= 1")
        if self.n_samples < 2:
            raise ValueError("n_samples must be >= 2")
        if self.loss_kind not in ("exact", "surrogate"):
            raise ValueError("loss_kind must be 'exact' or 'surrogate'")

    @property
    def final_reward_std(self) -> float:
        # Table-3 name kept verbatim; the value is used as the Gaussian sigma
        return self.final_reward_variance

    def resolved(self, mdp: TabularMdp) -> "TrainConfig":
        if self.gamma is not None:
            return self
        doc = asdict(self)
        doc["gamma"] = mdp.gamma
        return TrainConfig(**doc)

    def to_dict(self) -> dict:
        return asdict(self)


class ReplayBuffer:
    """Fixed-capacity ring buffer; oldest transitions are overwritten first."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._ring: list[Transition] = []
        self._cursor = 0

    def __len__(self) -> int:
        return len(self._ring)

    def push(self, tr: Transition) -> None:
        if len(self._ring) < self.capacity:
            self._ring.append(tr)
        else:
            self._ring[self._cursor] = tr
        self._cursor = (self._cursor + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        if len(self._ring) < batch_size:
            raise ValueError("not enough transitions to sample a batch")
        idx = rng.integers(0, len(self._ring), size=batch_size)
        return [self._ring[i] for i in idx]


def estimate_q(params: MixtureFlowParams, z_batch) -> float:
    """Monte-Carlo action value: mean of the mapped return samples."""
    u = flows.mixture_cdf(params, np.asarray(z_batch, dtype=float))
    return float(flows.rescale(u, params.g_max).mean())


def q_values(net: NetworkParams, state: int, z_batch: np.ndarray) -> np.ndarray:
    """Per-action Q estimates for one state (shared base sample batch)."""
    params = network.forward_params(net, network.state_onehot(state, net.state_dim))
    return np.array([estimate_q(p, z_batch) for p in params])


def select_action(net: NetworkParams, state: int, epsilon: float,
                  z_batch: np.ndarray, rng: np.random.Generator) -> int:
    """Epsilon-greedy over Monte-Carlo Q estimates; ties go to the lowest id."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if rng.random() < epsilon:
        return int(rng.integers(net.n_actions))
    return int(np.argmax(q_values(net, state, z_batch)))


def epsilon_schedule(step: int, config: TrainConfig) -> float:
    """Linear decay from start_e to end_e over exploration_fraction of the run."""
    horizon = config.exploration_fraction * config.total_timesteps
    if horizon <= 0 or step >= horizon:
        return config.end_e
    return config.start_e + (config.end_e - config.start_e) * step / horizon


class _AgentFlows:
    """Adapter giving the target-construction code flow params by (state, action)."""

    def __init__(self, net: NetworkParams, target_net: NetworkParams):
        self.net = net
        self.target_net = target_net
        self.n_actions = net.n_actions

    def predicted_flow(self, state: int, action: int) -> MixtureFlowParams:
        return network.forward_params(
            self.net, network.state_onehot(state, self.net.state_dim))[action]

    def target_flow(self, state: int, action: int) -> MixtureFlowParams:
        return network.forward_params(
            self.target_net, network.state_onehot(state, self.target_net.state_dim))[action]


def cramer_to_samples(params: MixtureFlowParams, samples: np.ndarray,
                      p: float = 2.0, grid_size: int = 2048) -> float:
    """Exact Cramer distance between a learned flow and an empirical sample set.

    Both CDFs are evaluated on one grid covering the union of supports: the
    learned CDF by cumulative trapezoid integration of the flow density, the
    sample CDF empirically.
    """
    samples = np.asarray(samples, dtype=float)
    lo = min(-params.g_max, samples.min()) - 0.1
    hi = max(params.g_max, samples.max()) + 0.1
    grid = np.linspace(lo, hi, grid_size)
    dens = flows.density_at(params, grid)
    cdf_learned = losses.cumtrapz(dens, grid)
    cdf_emp = np.searchsorted(np.sort(samples), grid, side="right") / samples.size
    diff = np.abs(cdf_learned - cdf_emp) ** p
    return float(np.trapezoid(diff, grid)) ** (1.0 / p)


def distribution_mean(params: MixtureFlowParams, z_batch: np.ndarray) -> float:
    return estimate_q(params, z_batch)


def greedy_policy(net: NetworkParams, mdp: TabularMdp, z_batch: np.ndarray) -> np.ndarray:
    return np.array([
        int(np.argmax(q_values(net, s, z_batch))) for s in range(mdp.n_states)
    ])


def greedy_return(net: NetworkParams, mdp: TabularMdp, z_batch: np.ndarray,
                  n_episodes: int, rng: np.random.Generator) -> float:
    """Mean discounted return of the greedy policy."""
    policy = greedy_policy(net, mdp, z_batch)
    total = 0.0
    for _ in range(n_episodes):
        s = mdp.start_state
        total += envs.rollout_return(mdp, s, int(policy[s]), lambda s2: int(policy[s2]),
                                     rng, max_steps=200, truncate=True)
    return total / n_episodes


@dataclass
class MetricsRow:
    step: int
    loss: float          # nan before learning starts
    eval_cramer_mean: float
    greedy_return_mean: float
    epsilon: float


@dataclass
class TrainResult:
    net: NetworkParams
    adam: network.AdamState
    metrics: list = field(default_factory=list)
    config: TrainConfig | None = None


def _ground_truth_samples(mdp: TabularMdp, rng: np.random.Generator,
                          n_rollouts: int = 2000) -> dict:
    """MC return samples per non-terminal state, single-action MDPs only."""
    if mdp.n_actions != 1:
        return {}
    return {
        s: envs.true_return_distribution(mdp, s, 0, n_rollouts, rng)
        for s in range(mdp.n_states) if not mdp.terminal[s]
    }


def train(mdp: TabularMdp, config: TrainConfig) -> TrainResult:
    """Run the full training loop and return the net plus a metrics log."""
    config = config.resolved(mdp)
    ss = np.random.SeedSequence(config.seed)
    rng_init, rng_env, rng_act, rng_z, rng_buf, rng_eval, rng_gt = (
        np.random.default_rng(s) for s in ss.spawn(7)
    )

    net = network.init_network(
        mdp.n_states, mdp.n_actions, config.n_components,
        config.hidden_size_1, config.hidden_size_2, rng_init,
    )
    target_net = network.sync_target(net)
    adam = network.AdamState.init(net)
    buffer = ReplayBuffer(config.buffer_size)
    eval_z = rng_z.standard_normal(config.n_samples)
    ground_truth = _ground_truth_samples(mdp, rng_gt)

    env_states = [mdp.start_state] * config.num_envs
    metrics: list[MetricsRow] = []
    latest_loss = math.nan
    train_steps = 0

    for step_i in range(config.total_timesteps):
        env_i = step_i % config.num_envs
        eps = epsilon_schedule(step_i, config)
        z_act = rng_act.standard_normal(config.n_samples)
        action = select_action(net, env_states[env_i], eps, z_act, rng_act)
        tr = envs.step(mdp, env_states[env_i], action, rng_env)
        buffer.push(tr)
        env_states[env_i] = mdp.start_state if tr.done else tr.next_state

        if step_i >= config.learning_starts and step_i % config.train_frequency == 0 \
                and len(buffer) >= config.batch_size:
            batch = buffer.sample(config.batch_size, rng_buf)
            z_batch = rng_z.standard_normal(config.n_samples)
            loss, grads = network.loss_and_grad(net, target_net, batch, z_batch, config)
            network.sgd_adam_step(net, grads, adam, config.learning_rate, config.max_norm)
            latest_loss = loss
            train_steps += 1
            if train_steps % config.target_network_frequency == 0:
                target_net = network.sync_target(net)

        if (step_i + 1) % config.eval_interval == 0:
            cramer_mean = math.nan
            if ground_truth:
                dists = []
                for s, samples in ground_truth.items():
                    p = network.forward_params(net, network.state_onehot(s, net.state_dim))[0]
                    dists.append(cramer_to_samples(p, samples))
                cramer_mean = float(np.mean(dists))
            g_ret = greedy_return(net, mdp, eval_z, n_episodes=20, rng=rng_eval)
            metrics.append(MetricsRow(
                step=step_i + 1, loss=latest_loss, eval_cramer_mean=cramer_mean,
                greedy_return_mean=g_ret, epsilon=eps,
            ))

    return TrainResult(net=net, adam=adam, metrics=metrics, config=config)


def export_distribution(net: NetworkParams, state: int, action: int,
                        grid_size: int = 512):
    """(support, density) table on a uniform grid over (-g_max, g_max)."""
    params = network.forward_params(net, network.state_onehot(state, net.state_dim))[action]
    support = np.linspace(-params.g_max, params.g_max, grid_size)
    density = flows.density_at(params, support)
    return support, density
