"""Slot allocation for marketplace search auctions.

GFP ranking on slot-averaged scores versus position-aware maximum-weight
matching, with Seeker-Weight calibration and a discounted weight-setting MDP.
"""
from .allocation import (
    Matching,
    SolverReport,
    gfp_rank,
    match_auction_eps,
    match_brute_force,
    match_optimal,
    total_score,
)
from .core import (
    ADDITIVE,
    InvalidInstanceError,
    QueryInstance,
    ScoreCombiner,
    SlotAveragedView,
    get_combiner,
    score_position_aware,
    score_position_unaware,
    slot_average,
)
from .metrics import AllocationOutcome, PopulationSummary, aggregate, relevance, revenue

__version__ = "0.1.0"
