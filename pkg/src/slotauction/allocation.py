"""Allocation rules: GFP sorting and position-aware maximum-weight matching.

All solvers return job -> slot assignments (``assignment[j] == k`` puts job
``j`` in slot ``k``). Exact solvers share one tie-break: among optimal
matchings, the lexicographically smallest assignment array wins.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .core import InvalidInstanceError, as_score_matrix

BRUTE_FORCE_MAX_N = 10
DEFAULT_SCALE = 1e6


class SizeLimitError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Matching:
    """A bijection from jobs to slots."""

    assignment: np.ndarray

    def __post_init__(self):
        a = np.array(self.assignment, dtype=np.intp)
        n = a.size
        if a.ndim != 1 or n < 1:
            raise InvalidInstanceError("assignment must be a nonempty vector")
        if not np.array_equal(np.sort(a), np.arange(n)):
            raise InvalidInstanceError(f"assignment {a.tolist()} is not a permutation of 0..{n - 1}")
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)

    @property
    def n(self) -> int:
        return self.assignment.size

    @property
    def inverse(self) -> np.ndarray:
        """``inverse[k]`` is the job shown at slot ``k``."""
        inv = np.empty_like(self.assignment)
        inv[self.assignment] = np.arange(self.n)
        return inv

    def __eq__(self, other):
        if not isinstance(other, Matching):
            return NotImplemented
        return np.array_equal(self.assignment, other.assignment)

    def __hash__(self):
        return hash(tuple(self.assignment.tolist()))

    def __repr__(self):
        return f"Matching({self.assignment.tolist()})"


@dataclass(frozen=True)
class SolverReport:
    matching: Matching
    total_score: float
    solver: str
    iterations: int = 0


def total_score(scores, assignment) -> float:
    """Sum ``scores[j, assignment[j]]`` left to right over ``j``.

    Every solver reports totals through this function so that equal
    matchings give bit-identical totals.
    """
    s = np.asarray(scores, dtype=float)
    a = np.asarray(assignment if not isinstance(assignment, Matching) else assignment.assignment)
    total = 0.0
    for j, k in enumerate(a.tolist()):
        total += float(s[j, k])
    return total


def _tie_tolerance(s: np.ndarray) -> float:
    return 1e-9 * max(1.0, float(np.max(np.abs(s))))


def _report(s, assignment, solver, iterations=0) -> SolverReport:
    m = Matching(assignment)
    return SolverReport(m, total_score(s, m), solver, iterations)


# --------------------------------------------------------------------------
# GFP


def gfp_rank(score_bar: Sequence[float]) -> Matching:
    """Rank jobs by descending slot-averaged score; equal scores keep job order."""
    s = np.asarray(score_bar, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise InvalidInstanceError("gfp_rank needs a nonempty score vector")
    if not np.all(np.isfinite(s)):
        raise InvalidInstanceError("scores must be finite")
    order = np.argsort(-s, kind="stable")
    assignment = np.empty(s.size, dtype=np.intp)
    assignment[order] = np.arange(s.size)
    return Matching(assignment)


# --------------------------------------------------------------------------
# Hungarian (Kuhn-Munkres), maximization via cost = max(s) - s


def _hungarian_min(cost: np.ndarray):
    """Shortest-augmenting-path Hungarian method, O(n^3).

    Returns ``(assignment, u, v)`` where ``u``/``v`` are row/column
    potentials with ``cost[i, j] - u[i] - v[j] >= 0`` and equality on the
    matched edges.
    """
    n = cost.shape[0]
    INF = np.inf
    # 1-based internals; index 0 is the virtual root column
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.intp)  # p[j]: row matched to column j
    way = np.zeros(n + 1, dtype=np.intp)
    c = np.zeros((n + 1, n + 1))
    c[1:, 1:] = cost
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, INF)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = c[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            masked = np.where(free, minv, INF)
            j1 = int(np.argmin(masked))
            delta = masked[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    assignment = np.empty(n, dtype=np.intp)
    assignment[p[1:] - 1] = np.arange(n)
    return assignment, u[1:], v[1:]


def _lexicographic_refine(assignment: np.ndarray, tight: np.ndarray) -> np.ndarray:
    """Smallest-lexicographic perfect matching inside the tight-edge graph.

    ``assignment`` must already be a perfect matching using tight edges. Jobs
    are fixed in index order; job ``j`` moves to a smaller tight slot ``k``
    when the job holding ``k`` can be rerouted along an alternating path of
    unfixed jobs to ``j``'s old slot.
    """
    n = assignment.size
    match = assignment.copy()
    owner = np.empty(n, dtype=np.intp)
    owner[match] = np.arange(n)
    locked = np.zeros(n, dtype=bool)  # slots held by fixed jobs
    neighbours = [np.flatnonzero(tight[j]) for j in range(n)]

    def reroute(job, target, blocked):
        # DFS for an alternating path from ``job`` to slot ``target``
        stack = [(job, iter(neighbours[job]))]
        parent = {}
        seen = set(blocked)
        while stack:
            cur, it = stack[-1]
            advanced = False
            for k in it:
                k = int(k)
                if k in seen or locked[k]:
                    continue
                seen.add(k)
                parent[k] = cur
                if k == target:
                    # unwind: each job on the path takes the slot it reached
                    slot = k
                    while True:
                        jb = parent[slot]
                        prev = int(match[jb])
                        match[jb] = slot
                        owner[slot] = jb
                        if jb == job:
                            return True
                        slot = prev
                stack.append((int(owner[k]), iter(neighbours[int(owner[k])])))
                advanced = True
                break
            if not advanced:
                stack.pop()
        return False

    for j in range(n):
        current = int(match[j])
        for k in neighbours[j]:
            k = int(k)
            if k >= current:
                break
            if locked[k]:
                continue
            other = int(owner[k])
            # tentatively give k to j, then find ``other`` a path to ``current``
            if reroute(other, current, blocked={k}):
                match[j] = k
                owner[k] = j
                break
        locked[match[j]] = True
    return match


def match_optimal(scores) -> SolverReport:
    """Exact maximum-total-score matching with lexicographic tie-break.

    Solves the minimization ``cost = max(s) - s`` by the Hungarian method,
    then uses the optimal dual potentials: every optimal matching lives on the
    edges with zero reduced cost, and the lexicographically smallest perfect
    matching on that subgraph is selected.
    """
    s = as_score_matrix(scores)
    n = s.shape[0]
    if n == 1:
        return _report(s, [0], "hungarian")
    cost = s.max() - s
    assignment, u, v = _hungarian_min(cost)
    slack = cost - u[:, None] - v[None, :]
    tight = slack <= _tie_tolerance(s) / n
    tight[np.arange(n), assignment] = True
    assignment = _lexicographic_refine(assignment, tight)
    return _report(s, assignment, "hungarian")


# --------------------------------------------------------------------------
# Brute force oracle


@lru_cache(maxsize=None)
def _permutations(n: int) -> np.ndarray:
    perms = np.fromiter(
        itertools.chain.from_iterable(itertools.permutations(range(n))),
        dtype=np.int8,
        count=n * _factorial(n),
    )
    perms = perms.reshape(-1, n)
    perms.setflags(write=False)
    return perms


def _factorial(n):
    out = 1
    for i in range(2, n + 1):
        out *= i
    return out


def match_brute_force(scores) -> SolverReport:
    """Enumerate all ``n!`` matchings; for testing the exact solvers (n <= 10)."""
    s = as_score_matrix(scores)
    n = s.shape[0]
    if n > BRUTE_FORCE_MAX_N:
        raise SizeLimitError(f"brute force limited to n <= {BRUTE_FORCE_MAX_N}, got n={n}")
    perms = _permutations(n)
    totals = np.zeros(perms.shape[0])
    for j in range(n):
        totals += s[j, perms[:, j]]
    best = totals.max()
    # permutations come out in lexicographic order, so the first near-max wins
    idx = int(np.argmax(totals >= best - _tie_tolerance(s)))
    return _report(s, perms[idx].astype(np.intp), "brute_force", perms.shape[0])


# --------------------------------------------------------------------------
# Auction algorithm with epsilon scaling


def default_eps_schedule(scaled_scores: np.ndarray, factor: float = 4.0) -> list[float]:
    """Geometric schedule from ``range/factor`` down to ``1/(n+1)``."""
    n = scaled_scores.shape[0]
    spread = float(np.ptp(scaled_scores)) if scaled_scores.size else 0.0
    final = 1.0 / (n + 1)
    sched = []
    eps = max(spread, 1.0) / factor
    while eps > final:
        sched.append(eps)
        eps /= factor
    sched.append(final)
    return sched


def _auction_phase(benefit, prices, eps, max_bids):
    """One forward-auction pass (Gauss-Seidel bidding) at fixed ``eps``."""
    n = benefit.shape[0]
    person_to_obj = np.full(n, -1, dtype=np.intp)
    obj_to_person = np.full(n, -1, dtype=np.intp)
    unassigned = list(range(n - 1, -1, -1))
    bids = 0
    while unassigned:
        i = unassigned.pop()
        values = benefit[i] - prices
        if n == 1:
            j, increment = 0, eps
        else:
            top2 = np.argpartition(-values, 1)[:2]
            a, b = int(top2[0]), int(top2[1])
            if values[b] > values[a] or (values[b] == values[a] and b < a):
                a, b = b, a
            j = a
            increment = values[a] - values[b] + eps
        prices[j] += increment
        prev = obj_to_person[j]
        if prev >= 0:
            person_to_obj[prev] = -1
            unassigned.append(int(prev))
        obj_to_person[j] = i
        person_to_obj[i] = j
        bids += 1
        if bids > max_bids:
            raise RuntimeError(f"auction phase at eps={eps} exceeded {max_bids} bids")
    return person_to_obj, bids


def match_auction_eps(
    scores,
    eps_schedule: Sequence[float] | None = None,
    scale: float = DEFAULT_SCALE,
    max_bids: int = 10_000_000,
) -> SolverReport:
    """Bertsekas-style auction with epsilon scaling.

    Scores are rounded to integers after multiplying by ``scale``; ``eps``
    values in the schedule are in those integer units. Prices carry over
    between phases. When the last ``eps`` is below ``1/n`` the result is
    optimal for the scaled integer problem; otherwise it is within
    ``n * eps``. ``iterations`` counts bids over all phases.
    """
    s = as_score_matrix(scores)
    n = s.shape[0]
    benefit = np.rint(s * scale)
    if eps_schedule is None:
        eps_schedule = default_eps_schedule(benefit)
    sched = [float(e) for e in eps_schedule]
    if not sched:
        raise ValueError("eps_schedule must be nonempty")
    if any(not np.isfinite(e) or e <= 0 for e in sched):
        raise ValueError("eps_schedule values must be positive and finite")
    if any(b >= a for a, b in zip(sched, sched[1:])):
        raise ValueError("eps_schedule must be strictly decreasing")
    prices = np.zeros(n)
    total_bids = 0
    assignment = None
    for eps in sched:
        assignment, bids = _auction_phase(benefit, prices, eps, max_bids)
        total_bids += bids
    return _report(s, assignment, "auction_eps", total_bids)
