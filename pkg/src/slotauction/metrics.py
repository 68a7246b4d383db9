"""Revenue and relevance of a slate, and population averages."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np

from .allocation import Matching, total_score
from .core import InvalidInstanceError, QueryInstance

PER_SEEKER_COLUMNS = ("seeker_id", "n", "mechanism", "revenue", "relevance")
MECHANISMS = ("gfp", "vcg")
EVENTS = ("click", "impression")


@dataclass(frozen=True)
class AllocationOutcome:
    matching: Matching
    revenue: float
    relevance: float
    mechanism: str
    total_score: float = float("nan")
    seeker_id: Hashable = None


@dataclass(frozen=True)
class PopulationSummary:
    """Population means of per-seeker revenue and relevance for both mechanisms.

    The ``se_*`` fields are standard errors of those means (sample standard
    deviation over ``sqrt(seeker_count)``); NaN for a single seeker.
    """

    seeker_count: int
    rev_gfp: float
    rev_vcg: float
    rel_gfp: float
    rel_vcg: float
    se_rev_gfp: float = float("nan")
    se_rev_vcg: float = float("nan")
    se_rel_gfp: float = float("nan")
    se_rel_vcg: float = float("nan")


def _check(instance: QueryInstance, matching: Matching) -> np.ndarray:
    if not isinstance(matching, Matching):
        matching = Matching(matching)
    if matching.n != instance.n:
        raise InvalidInstanceError(f"matching has n={matching.n}, instance has n={instance.n}")
    return matching.assignment


def revenue(instance: QueryInstance, matching: Matching, event: str = "click") -> float:
    """Expected first-price revenue of the slate.

    ``event="click"`` charges each job its bid per click, giving
    ``sum_j b[j] * pctr[j, M(j)]``; ``event="impression"`` charges the bid
    per display, giving ``sum_j b[j]`` for any full slate.
    """
    a = _check(instance, matching)
    if event == "click":
        per_job = instance.bids * instance.pctr[np.arange(instance.n), a]
    elif event == "impression":
        per_job = instance.bids
    else:
        raise ValueError(f"unknown performance event {event!r}; expected one of {EVENTS}")
    return math.fsum(per_job.tolist())


def relevance(instance: QueryInstance, matching: Matching) -> float:
    """Total realized relevance ``sum_j erelevance[j, M(j)]``."""
    a = _check(instance, matching)
    return math.fsum(instance.erelevance[np.arange(instance.n), a].tolist())


def discounted_relevance(instance: QueryInstance, matching: Matching, normalize: bool = True) -> float:
    """DCG-style relevance of the slate from slot-averaged relevance.

    Slot ``k`` (0-based) is discounted by ``1/log2(k + 2)``. With
    ``normalize`` the result is divided by the DCG of the ideal ordering
    (jobs sorted by descending mean relevance); an all-zero slate gives 0.
    """
    a = _check(instance, matching)
    mu_bar = instance.erelevance.mean(axis=1)
    discount = 1.0 / np.log2(np.arange(instance.n) + 2.0)
    dcg = float(np.sum(mu_bar * discount[a]))
    if not normalize:
        return dcg
    ideal = float(np.sum(np.sort(mu_bar)[::-1] * discount))
    return dcg / ideal if ideal > 0 else 0.0


def evaluate(instance: QueryInstance, matching: Matching, mechanism: str, scores=None, event: str = "click"):
    """Bundle revenue, relevance and (optionally) total score into an outcome."""
    if mechanism not in MECHANISMS:
        raise ValueError(f"mechanism must be one of {MECHANISMS}")
    return AllocationOutcome(
        matching=matching,
        revenue=revenue(instance, matching, event),
        relevance=relevance(instance, matching),
        mechanism=mechanism,
        total_score=total_score(scores, matching) if scores is not None else float("nan"),
        seeker_id=instance.seeker_id,
    )


def _mean_se(values: Sequence[float]) -> tuple[float, float]:
    m = len(values)
    mean = math.fsum(values) / m
    if m < 2:
        return mean, float("nan")
    var = math.fsum((x - mean) ** 2 for x in values) / (m - 1)
    return mean, math.sqrt(var / m)


def aggregate(outcomes: Iterable[tuple[AllocationOutcome, AllocationOutcome]]) -> PopulationSummary:
    """Average (gfp, vcg) outcome pairs over seekers.

    Sums use ``math.fsum``, which is correctly rounded, so the result does
    not depend on the order of ``outcomes``.
    """
    pairs = list(outcomes)
    if not pairs:
        raise ValueError("aggregate needs at least one seeker")
    cols = {key: [] for key in ("rev_gfp", "rev_vcg", "rel_gfp", "rel_vcg")}
    for gfp, vcg in pairs:
        cols["rev_gfp"].append(gfp.revenue)
        cols["rev_vcg"].append(vcg.revenue)
        cols["rel_gfp"].append(gfp.relevance)
        cols["rel_vcg"].append(vcg.relevance)
    stats = {key: _mean_se(vals) for key, vals in cols.items()}
    return PopulationSummary(
        seeker_count=len(pairs),
        **{key: stats[key][0] for key in cols},
        **{f"se_{key}": stats[key][1] for key in cols},
    )


def outcome_rows(n: int, pairs: Iterable[tuple[AllocationOutcome, AllocationOutcome]]):
    """Per-seeker CSV rows, gfp before vcg for each seeker."""
    for gfp, vcg in pairs:
        for o in (gfp, vcg):
            yield {
                "seeker_id": o.seeker_id,
                "n": n,
                "mechanism": o.mechanism,
                "revenue": repr(float(o.revenue)),
                "relevance": repr(float(o.relevance)),
            }


def write_per_seeker_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=PER_SEEKER_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def read_per_seeker_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        row["n"] = int(row["n"])
        row["revenue"] = float(row["revenue"])
        row["relevance"] = float(row["relevance"])
    return rows
