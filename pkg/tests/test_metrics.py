import math

import numpy as np
import pytest

from slotauction.allocation import Matching
from slotauction.core import QueryInstance
from slotauction.metrics import (
    AllocationOutcome,
    aggregate,
    discounted_relevance,
    read_per_seeker_csv,
    relevance,
    revenue,
    write_per_seeker_csv,
    outcome_rows,
)


def outcome(rev, rel, mech="gfp"):
    return AllocationOutcome(Matching([0]), rev, rel, mech)


def test_revenue_hand():
    inst = QueryInstance([1.0, 2.0], [[0.5, 0.2], [0.4, 0.1]], np.zeros((2, 2)))
    assert revenue(inst, Matching([0, 1])) == pytest.approx(0.7, abs=1e-15)


def test_revenue_single():
    assert revenue(QueryInstance([3.0], [[0.5]], [[0.0]]), Matching([0])) == 1.5


def test_revenue_zero_bids(rng):
    inst = QueryInstance(np.zeros(3), rng.random((3, 3)), rng.random((3, 3)))
    assert revenue(inst, Matching([2, 0, 1])) == 0.0


def test_revenue_per_impression():
    inst = QueryInstance([1.0, 2.0], [[0.5, 0.2], [0.4, 0.1]], np.zeros((2, 2)))
    assert revenue(inst, Matching([1, 0]), event="impression") == 3.0
    with pytest.raises(ValueError):
        revenue(inst, Matching([1, 0]), event="application")


def test_relevance_hand():
    inst = QueryInstance([1.0, 1.0], np.zeros((2, 2)), [[0.9, 0.1], [0.2, 0.8]])
    assert relevance(inst, Matching([0, 1])) == pytest.approx(1.7, abs=1e-15)
    assert relevance(inst, Matching([1, 0])) == pytest.approx(0.3, abs=1e-15)


def test_relevance_constant(rng):
    inst = QueryInstance(np.ones(4), rng.random((4, 4)), np.full((4, 4), 0.25))
    for perm in ([0, 1, 2, 3], [3, 2, 1, 0], [1, 3, 0, 2]):
        assert relevance(inst, Matching(perm)) == 1.0


def test_dimension_mismatch():
    inst = QueryInstance([1.0], [[0.5]], [[0.5]])
    with pytest.raises(ValueError):
        revenue(inst, Matching([1, 0]))


def test_permutation_covariance(rng):
    n = 5
    inst = QueryInstance(rng.random(n), rng.random((n, n)), rng.random((n, n)))
    m = Matching(rng.permutation(n))
    relabel = rng.permutation(n)  # new job i is old job relabel[i]
    inst2 = QueryInstance(inst.bids[relabel], inst.pctr[relabel], inst.erelevance[relabel])
    m2 = Matching(m.assignment[relabel])
    assert revenue(inst2, m2) == revenue(inst, m)
    assert relevance(inst2, m2) == relevance(inst, m)


def test_discounted_relevance():
    mu = np.array([[3.0, 3.0], [1.0, 1.0]])
    inst = QueryInstance([1.0, 1.0], np.zeros((2, 2)), mu)
    assert discounted_relevance(inst, Matching([0, 1])) == pytest.approx(1.0)
    dcg = 3.0 / math.log2(3) + 1.0
    ideal = 3.0 + 1.0 / math.log2(3)
    assert discounted_relevance(inst, Matching([1, 0])) == pytest.approx(dcg / ideal)
    assert discounted_relevance(inst, Matching([1, 0]), normalize=False) == pytest.approx(dcg)


def test_aggregate_single_and_pair():
    one = aggregate([(outcome(1.0, 2.0), outcome(3.0, 4.0, "vcg"))])
    assert (one.rev_gfp, one.rel_gfp, one.rev_vcg, one.rel_vcg) == (1.0, 2.0, 3.0, 4.0)
    assert math.isnan(one.se_rev_gfp)
    two = aggregate([(outcome(1.0, 0.0), outcome(0.0, 0.0, "vcg")), (outcome(3.0, 0.0), outcome(0.0, 0.0, "vcg"))])
    assert two.rev_gfp == 2.0
    assert two.se_rev_gfp == pytest.approx(1.0)


def test_aggregate_empty():
    with pytest.raises(ValueError):
        aggregate([])


def test_aggregate_order_independent(rng):
    pairs = [(outcome(*rng.random(2)), outcome(*rng.random(2), "vcg")) for _ in range(200)]
    a = aggregate(pairs)
    b = aggregate(pairs[::-1])
    c = aggregate([pairs[i] for i in rng.permutation(200)])
    assert a == b == c


def test_per_seeker_csv_roundtrip(tmp_path, rng):
    pairs = [
        (AllocationOutcome(Matching([0]), *rng.random(2), "gfp", seeker_id=i),
         AllocationOutcome(Matching([0]), *rng.random(2), "vcg", seeker_id=i))
        for i in range(100)
    ]
    path = tmp_path / "rows.csv"
    write_per_seeker_csv(path, outcome_rows(3, pairs))
    rows = read_per_seeker_csv(path)
    assert len(rows) == 200
    summary = aggregate(pairs)
    gfp_rev = [r["revenue"] for r in rows if r["mechanism"] == "gfp"]
    vcg_rel = [r["relevance"] for r in rows if r["mechanism"] == "vcg"]
    assert math.fsum(gfp_rev) / 100 == summary.rev_gfp
    assert math.fsum(vcg_rel) / 100 == summary.rel_vcg
