# %% [markdown]
# # Choosing Seeker-Weights over time
#
# States bin a seeker's query by mean bid and mean relevance; actions are a
# small grid of Seeker-Weights. Gains come from running the matching on
# representative queries in each state. The kernel is unknown: we simulate
# logged transitions from a hidden kernel where higher weights push seekers
# toward higher-relevance states, estimate it, and plan.

# %%
import numpy as np

from slotauction.mdp import (
    GridSpec,
    MdpModel,
    build_gain_table,
    discretize_state,
    learn_and_plan,
    sample_episodes,
    value_iteration,
)
from slotauction.simulation import SimulationConfig, sample_instance, seeker_rng

actions = [0.25, 1.0, 2.0]
grid = GridSpec.uniform([(0.5, 1.8), (0.15, 0.45)], [2, 2])
config = SimulationConfig(seed=1)

buckets = [[] for _ in range(grid.state_count)]
for i in range(2000):
    inst = sample_instance(config, 5, seeker_rng(config.seed, 5, i))
    s = discretize_state(inst.bids, inst.erelevance, grid)
    if len(buckets[s]) < 30:
        buckets[s].append(inst)
print("instances per state:", [len(b) for b in buckets])

# %%
# charge 2.0 per unit of weight so that raising it costs gain today
gain = build_gain_table(buckets, actions) - np.array(actions)[None, :] * 2.0
print("gain table:\n", gain.round(3))

# %%
rng = np.random.default_rng(5)
S, A = grid.state_count, len(actions)
hidden = rng.dirichlet(np.ones(S), size=(S, A))
# high-relevance states are 1 and 3 in row-major (bid bin, relevance bin) order
for a in range(A):
    hidden[:, a, 1::2] *= 1.0 + a
hidden /= hidden.sum(axis=2, keepdims=True)

episodes = sample_episodes(hidden, rng, episode_count=500, episode_length=50)
model, learned = learn_and_plan(episodes, gain, discount=0.9, actions=actions)
oracle = value_iteration(MdpModel(gain, hidden, 0.9, actions))
print("learned policy weights:", [actions[a] for a in learned.policy])
print("oracle policy weights: ", [actions[a] for a in oracle.policy])
print("values:", learned.values.round(3), "iterations:", learned.iterations)
