# %% [markdown]
# # Ranking one query: GFP vs position-aware matching
#
# Two buyers, two goods. Alice values (x, y) at (0, 1), Bob at (2, 3).
# Greedy per-good allocation would hand both goods to Bob; with one slot
# per bidder the best plan is Alice -> x, Bob -> y (or the tied reverse).

# %%
import numpy as np

from slotauction import (
    QueryInstance,
    gfp_rank,
    match_brute_force,
    match_optimal,
    relevance,
    revenue,
    score_position_aware,
    slot_average,
    total_score,
)

valuations = np.array([[0.0, 1.0], [2.0, 3.0]])
best = match_optimal(valuations)
print("optimal assignment (job -> slot):", best.matching.assignment.tolist(), "total", best.total_score)
print("brute force agrees:", match_brute_force(valuations).total_score)

# %% [markdown]
# ## A position-aware query
#
# Three jobs, three slots. Job 2 bids the most but its click rate falls off
# sharply below the top slot; job 0 is highly relevant everywhere.

# %%
inst = QueryInstance(
    bids=[1.0, 1.2, 2.0],
    pctr=[[0.30, 0.25, 0.20],
          [0.35, 0.20, 0.05],
          [0.40, 0.10, 0.02]],
    erelevance=[[0.9, 0.8, 0.7],
                [0.5, 0.3, 0.1],
                [0.2, 0.1, 0.05]],
    seeker_weight=0.5,
)
scores = score_position_aware(inst)
view = slot_average(inst, scores)
print("position-aware scores:\n", scores.round(3))
print("slot-averaged scores:", view.score_bar.round(3))

# %%
gfp = gfp_rank(view.score_bar)
vcg = match_optimal(scores).matching
for name, m in (("GFP", gfp), ("matching", vcg)):
    print(f"{name:9s} slots={m.assignment.tolist()} total={total_score(scores, m):.3f} "
          f"revenue={revenue(inst, m):.3f} relevance={relevance(inst, m):.3f}")
