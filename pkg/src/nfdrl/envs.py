"""Seeded tabular MDPs: three toy chains, a two-branch Bernoulli MDP and
4x4 FrozenLake, plus Monte-Carlo and value-iteration ground-truth oracles.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

MAX_ROLLOUT_STEPS = 10_000


@dataclass(frozen=True)
class RewardSpec:
    """Reward law for one (state, action, next state) edge.

    kind is one of "constant", "gaussian", "gaussian_mixture"; values holds
    the constant, (mean, std), or a list of (weight, mean, std) triples.
    """

    kind: str
    values: tuple

    def __post_init__(self):
        if self.kind == "constant":
            float(self.values[0])
        elif self.kind == "gaussian":
            mean, std = self.values
            if not std > 0:
                raise ValueError("gaussian std must be positive")
        elif self.kind == "gaussian_mixture":
            weights = [w for w, _, _ in self.values]
            if abs(sum(weights) - 1.0) > 1e-12:
                raise ValueError("mixture weights must sum to 1")
            if any(std <= 0 for _, _, std in self.values):
                raise ValueError("mixture stds must be positive")
        else:
            raise ValueError(f"unknown reward kind {self.kind!r}")

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "constant":
            return float(self.values[0])
        if self.kind == "gaussian":
            mean, std = self.values
            return float(rng.normal(mean, std))
        weights = np.array([w for w, _, _ in self.values])
        k = rng.choice(len(self.values), p=weights)
        _, mean, std = self.values[k]
        return float(rng.normal(mean, std))

    def mean(self) -> float:
        if self.kind == "constant":
            return float(self.values[0])
        if self.kind == "gaussian":
            return float(self.values[0])
        return float(sum(w * m for w, m, _ in self.values))


ZERO_REWARD = RewardSpec("constant", (0.0,))


@dataclass(frozen=True)
class Transition:
    state: int
    action: int
    reward: float
    next_state: int
    done: bool


@dataclass(frozen=True)
class TabularMdp:
    """Finite MDP with categorical transitions and per-edge reward laws."""

    n_states: int
    n_actions: int
    transitions: np.ndarray            # (S, A, S) categorical rows
    rewards: dict                      # (s, a, s') -> RewardSpec
    terminal: np.ndarray               # (S,) bool
    gamma: float
    start_state: int = 0
    name: str = "mdp"

    def __post_init__(self):
        t = np.asarray(self.transitions, dtype=float)
        if t.shape != (self.n_states, self.n_actions, self.n_states):
            raise ValueError("transitions must have shape (S, A, S)")
        term = np.asarray(self.terminal, dtype=bool)
        rows = t.reshape(-1, self.n_states).sum(axis=1)
        if np.any(np.abs(rows - 1.0) > 1e-12):
            raise ValueError("each transition row must sum to 1")
        for s in range(self.n_states):
            if term[s] and not (t[s, :, s] == 1.0).all():
                raise ValueError("terminal states must self-loop")
        object.__setattr__(self, "transitions", t)
        object.__setattr__(self, "terminal", term)

    def reward_spec(self, s: int, a: int, s2: int) -> RewardSpec:
        return self.rewards.get((s, a, s2), ZERO_REWARD)

    def to_json(self) -> str:
        doc = {
            "states": self.n_states,
            "actions": self.n_actions,
            "transitions": self.transitions.tolist(),
            "rewards": {
                f"{s},{a},{s2}": {"kind": spec.kind, "values": list(spec.values)}
                for (s, a, s2), spec in sorted(self.rewards.items())
            },
            "terminal": self.terminal.tolist(),
            "gamma": self.gamma,
        }
        return json.dumps(doc, indent=2)

    @staticmethod
    def from_json(text: str) -> "TabularMdp":
        doc = json.loads(text)
        rewards = {}
        for key, spec in doc["rewards"].items():
            s, a, s2 = (int(v) for v in key.split(","))
            values = spec["values"]
            if spec["kind"] == "gaussian_mixture":
                values = [tuple(v) for v in values]
            rewards[(s, a, s2)] = RewardSpec(spec["kind"], tuple(values))
        return TabularMdp(
            n_states=doc["states"],
            n_actions=doc["actions"],
            transitions=np.array(doc["transitions"]),
            rewards=rewards,
            terminal=np.array(doc["terminal"], dtype=bool),
            gamma=doc["gamma"],
        )


def _chain_transitions(n_states: int) -> np.ndarray:
    t = np.zeros((n_states, 1, n_states))
    for s in range(n_states - 1):
        t[s, 0, s + 1] = 1.0
    t[n_states - 1, 0, n_states - 1] = 1.0
    return t


def make_mdp1(final_reward_std: float = 0.1, r1: float = -0.8, r2: float = 0.3,
              gamma: float = 0.9) -> TabularMdp:
    """Three-state chain s1 -> s2 -> s3(terminal), one action."""
    rewards = {
        (0, 0, 1): RewardSpec("gaussian", (r1, final_reward_std)),
        (1, 0, 2): RewardSpec("gaussian", (r2, final_reward_std)),
    }
    return TabularMdp(
        n_states=3, n_actions=1, transitions=_chain_transitions(3),
        rewards=rewards, terminal=np.array([False, False, True]),
        gamma=gamma, name="mdp1",
    )


def make_mdp2(final_reward_std: float = 0.1, r1: float = 0.8, r2: float = 0.3,
              gamma: float = 0.9) -> TabularMdp:
    """One state branching to two terminal states with probability 1/2 each."""
    t = np.zeros((3, 1, 3))
    t[0, 0, 1] = t[0, 0, 2] = 0.5
    t[1, 0, 1] = t[2, 0, 2] = 1.0
    rewards = {
        (0, 0, 1): RewardSpec("gaussian", (r1, final_reward_std)),
        (0, 0, 2): RewardSpec("gaussian", (r2, final_reward_std)),
    }
    return TabularMdp(
        n_states=3, n_actions=1, transitions=t, rewards=rewards,
        terminal=np.array([False, True, True]), gamma=gamma, name="mdp2",
    )


def make_mdp3(second_std: float = 1.0) -> TabularMdp:
    """Four-state chain, zero rewards except a bimodal final reward; gamma=1."""
    rewards = {
        (3, 0, 4): RewardSpec(
            "gaussian_mixture", ((0.5, -2.0, 1.0), (0.5, 2.0, second_std))
        ),
    }
    return TabularMdp(
        n_states=5, n_actions=1, transitions=_chain_transitions(5),
        rewards=rewards, terminal=np.array([False] * 4 + [True]),
        gamma=1.0, name="mdp3",
    )


def make_bernoulli_mdp() -> TabularMdp:
    """One state, one action, two equal-probability terminal branches (0 / 1)."""
    t = np.zeros((3, 1, 3))
    t[0, 0, 1] = t[0, 0, 2] = 0.5
    t[1, 0, 1] = t[2, 0, 2] = 1.0
    rewards = {
        (0, 0, 1): RewardSpec("constant", (0.0,)),
        (0, 0, 2): RewardSpec("constant", (1.0,)),
    }
    return TabularMdp(
        n_states=3, n_actions=1, transitions=t, rewards=rewards,
        terminal=np.array([False, True, True]), gamma=1.0, name="bernoulli",
    )


FROZEN_LAKE_HOLES = (5, 7, 11, 12)
FROZEN_LAKE_GOAL = 15
# action ids: 0 left, 1 down, 2 right, 3 up
_FL_MOVES = {0: (0, -1), 1: (1, 0), 2: (0, 1), 3: (-1, 0)}


def _fl_next(state: int, action: int) -> int:
    row, col = divmod(state, 4)
    dr, dc = _FL_MOVES[action]
    nr, nc = min(max(row + dr, 0), 3), min(max(col + dc, 0), 3)
    return nr * 4 + nc


def make_frozen_lake(slippery: bool = True, gamma: float = 1.0) -> TabularMdp:
    """Standard 4x4 FrozenLake; slippery moves split 1/3 over the intended
    direction and its two perpendiculars, walls clamp.

    With the undiscounted default the return is the success indicator, so
    state values are success probabilities and the return distribution of
    every non-terminal state is a Bernoulli over {0, 1}.
    """
    n = 16
    t = np.zeros((n, 4, n))
    rewards = {}
    terminal = np.zeros(n, dtype=bool)
    terminal[list(FROZEN_LAKE_HOLES)] = True
    terminal[FROZEN_LAKE_GOAL] = True
    for s in range(n):
        if terminal[s]:
            t[s, :, s] = 1.0
            continue
        for a in range(4):
            moves = [a, (a - 1) % 4, (a + 1) % 4] if slippery else [a]
            for m in moves:
                s2 = _fl_next(s, m)
                t[s, a, s2] += 1.0 / len(moves)
                if s2 == FROZEN_LAKE_GOAL:
                    rewards[(s, a, s2)] = RewardSpec("constant", (1.0,))
    return TabularMdp(
        n_states=n, n_actions=4, transitions=t, rewards=rewards,
        terminal=terminal, gamma=gamma,
        name="frozenlake" if slippery else "frozenlake-nonslip",
    )


def step(mdp: TabularMdp, state: int, action: int, rng: np.random.Generator) -> Transition:
    """Sample one transition from the categorical row and its reward law."""
    if mdp.terminal[state]:
        raise ValueError(f"cannot step terminal state {state}")
    next_state = int(rng.choice(mdp.n_states, p=mdp.transitions[state, action]))
    reward = mdp.reward_spec(state, action, next_state).sample(rng)
    return Transition(state=state, action=action, reward=reward,
                      next_state=next_state, done=bool(mdp.terminal[next_state]))


def rollout_return(mdp: TabularMdp, state: int, action: int, policy,
                   rng: np.random.Generator, max_steps: int = MAX_ROLLOUT_STEPS,
                   truncate: bool = False) -> float:
    """One discounted rollout starting with the given action, then ``policy``.

    With ``truncate`` the partial return is reported after ``max_steps``;
    otherwise a rollout that long is an error. Truncation is for evaluating
    arbitrary policies (a half-trained greedy policy can cycle forever).
    """
    total, discount = 0.0, 1.0
    s, a = state, action
    for _ in range(max_steps):
        tr = step(mdp, s, a, rng)
        total += discount * tr.reward
        discount *= mdp.gamma
        if tr.done:
            return total
        s = tr.next_state
        a = policy(s)
    if truncate:
        return total
    raise RuntimeError(f"rollout exceeded {max_steps} steps without terminating")


def true_return_distribution(mdp: TabularMdp, state: int, action: int,
                             n_rollouts: int, rng: np.random.Generator,
                             policy=None) -> np.ndarray:
    """Monte-Carlo samples of the return from (state, action).

    Defaults to the single-action / greedy-fixed policy ``policy``; with one
    action per state no policy is needed.
    """
    if policy is None:
        if mdp.n_actions != 1:
            raise ValueError("a policy is required for multi-action MDPs")
        policy = lambda s: 0
    return np.array([
        rollout_return(mdp, state, action, policy, rng) for _ in range(n_rollouts)
    ])


def value_iteration(mdp: TabularMdp, gamma: float | None = None,
                    tol: float = 1e-12, max_iter: int = 100_000):
    """Expected-reward value iteration; returns (Q table, greedy policy)."""
    if gamma is None:
        gamma = mdp.gamma
    mean_r = np.zeros((mdp.n_states, mdp.n_actions, mdp.n_states))
    for (s, a, s2), spec in mdp.rewards.items():
        mean_r[s, a, s2] = spec.mean()
    v = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        cont = np.where(mdp.terminal, 0.0, v)
        q = np.einsum("sat,sat->sa", mdp.transitions, mean_r + gamma * cont[None, None, :])
        q[mdp.terminal] = 0.0
        v_new = q.max(axis=1)
        if np.max(np.abs(v_new - v)) < tol:
            v = v_new
            break
        v = v_new
    cont = np.where(mdp.terminal, 0.0, v)
    q = np.einsum("sat,sat->sa", mdp.transitions, mean_r + gamma * cont[None, None, :])
    q[mdp.terminal] = 0.0
    if gamma >= 1.0:
        # undiscounted ties between proper and improper actions (a zero-reward
        # self-loop scores the same as actually reaching the goal): break them
        # with a slightly discounted run, which strictly prefers earlier reward
        q_tb, _ = value_iteration(mdp, gamma=1.0 - 1e-6, tol=tol, max_iter=max_iter)
        return q, q_tb.argmax(axis=1)
    return q, q.argmax(axis=1)


def success_probability(mdp: TabularMdp, policy, goal: int = FROZEN_LAKE_GOAL) -> float:
    """Probability the policy's Markov chain is absorbed at ``goal``."""
    p = np.zeros(mdp.n_states)
    p[goal] = 1.0
    for _ in range(100_000):
        nxt = np.array([
            p[s] if mdp.terminal[s]
            else mdp.transitions[s, policy[s]] @ p
            for s in range(mdp.n_states)
        ])
        if np.max(np.abs(nxt - p)) < 1e-12:
            return float(nxt[mdp.start_state])
        p = nxt
    return float(p[mdp.start_state])


MDP_FACTORIES = {
    "mdp1": make_mdp1,
    "mdp2": make_mdp2,
    "mdp3": lambda **kw: make_mdp3(),
    "bernoulli": lambda **kw: make_bernoulli_mdp(),
    "frozenlake": lambda **kw: make_frozen_lake(),
}


def make_env(env_id: str, final_reward_std: float = 0.1) -> TabularMdp:
    if env_id not in MDP_FACTORIES:
        raise ValueError(f"unknown env id {env_id!r}")
    if env_id in ("mdp1", "mdp2"):
        return MDP_FACTORIES[env_id](final_reward_std=final_reward_std)
    return MDP_FACTORIES[env_id]()
