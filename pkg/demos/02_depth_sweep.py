# %% [markdown]
# # Revenue and relevance as auction depth grows
#
# Monte-Carlo sweep over the number of jobs per query. Every seeker gets the
# same sampled instance under both mechanisms; default distributions put a
# 1/log2(k+2) decay on click rate and relevance by slot.

# %%
import math

from slotauction.simulation import SimulationConfig, run_sweep, summary_csv

config = SimulationConfig(seeker_count=500, depth_grid=(2, 4, 8, 16), seed=7)
report = run_sweep(config, keep_rows=True)
print(summary_csv(report))

# %% [markdown]
# Paired differences (matching minus GFP) per depth. Both slates come from
# the same instance, so the paired standard error is the right yardstick.

# %%
for n in config.depth_grid:
    pairs = report.rows[n]
    for field in ("revenue", "relevance"):
        d = [getattr(v, field) - getattr(g, field) for g, v in pairs]
        mean = math.fsum(d) / len(d)
        se = math.sqrt(math.fsum((x - mean) ** 2 for x in d) / (len(d) - 1) / len(d))
        print(f"n={n:2d} {field:9s} diff {mean:+.4f} (se {se:.4f})")
    print(f"      strict score improvement on {report.strict_dominance[n]}/{config.seeker_count} seekers")

# %% [markdown]
# The revenue comparison depends on the distributions. When click rates
# ignore position, revenue no longer depends on the slate at all and only
# relevance separates the two mechanisms.

# %%
from slotauction.simulation import DistSpec

flat_ctr = SimulationConfig(
    seeker_count=500, depth_grid=(2, 4, 8, 16), seed=7,
    pctr_dist=DistSpec("positional", {"decay": "none", "noise_low": 1.0, "noise_high": 1.0, "clip_max": 1.0}),
)
print(summary_csv(run_sweep(flat_ctr)))
