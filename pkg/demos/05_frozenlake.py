"""Demo: control on slippery 4x4 FrozenLake.

Trains the distributional agent, compares its greedy policy's success
probability against the value-iteration optimum (computed exactly by the
absorption oracle), and shows how slip stochasticity induces multimodal
return distributions even with deterministic rewards.
"""

import argparse

import numpy as np

from nfdrl import agent, envs


ARROWS = {0: "<", 1: "v", 2: ">", 3: "^"}


def count_modes(support, density):
    n = 0
    for i in range(1, density.size - 1):
        if density[i] > density[i - 1] and density[i] > density[i + 1] \
                and density[i] > 0.1 * density.max():
            n += 1
    return n


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--steps", type=int, default=60_000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    mdp = envs.make_frozen_lake()
    _, vi_policy = envs.value_iteration(mdp)
    p_opt = envs.success_probability(mdp, vi_policy)
    print(f"value-iteration optimal success probability: {p_opt:.4f}")

    # the slippery lake needs sustained exploration before the greedy
    # action ranking settles
    config = agent.TrainConfig(total_timesteps=args.steps, seed=args.seed,
                               exploration_fraction=0.5, end_e=0.05)
    result = agent.train(mdp, config)

    z = np.random.default_rng(7).standard_normal(2000)
    policy = agent.greedy_policy(result.net, mdp, z)
    p_learned = envs.success_probability(mdp, policy)
    print(f"learned greedy success probability:          {p_learned:.4f} "
          f"({p_learned / p_opt:.0%} of optimal)")

    print("\ngreedy policy (H=hole, G=goal):")
    for row in range(4):
        cells = []
        for col in range(4):
            s = row * 4 + col
            if s in envs.FROZEN_LAKE_HOLES:
                cells.append("H")
            elif s == envs.FROZEN_LAKE_GOAL:
                cells.append("G")
            else:
                cells.append(ARROWS[int(policy[s])])
        print("  " + " ".join(cells))

    print("\nmodes of the learned greedy-action distribution per state:")
    multimodal = 0
    for s in range(mdp.n_states):
        if mdp.terminal[s]:
            continue
        support, density = agent.export_distribution(result.net, s, int(policy[s]))
        m = count_modes(support, density)
        multimodal += m >= 2
        print(f"  state {s:2d}: {m} mode(s)")
    print(f"{multimodal} non-terminal states have multimodal return distributions")


if __name__ == "__main__":
    main()
