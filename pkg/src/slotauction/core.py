"""Query instances and the scoring pipeline.

A query instance holds one seeker's auction: a bid per job, and
position-aware click-probability and relevance matrices (rows are jobs,
columns are slots). Scores combine a poster component ``b * pctr`` with a
seeker component ``w * erelevance`` through a :class:`ScoreCombiner`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Hashable

import numpy as np


class InvalidInstanceError(ValueError):
    """Raised when an instance or score matrix has inconsistent shape or bad values."""


@dataclass(frozen=True)
class ScoreCombiner:
    """Binary rule ``S(poster, seeker) -> score``.

    ``func`` must broadcast over numpy arrays, be nondecreasing in each
    argument and satisfy ``S(0, 0) == 0``.
    """

    name: str
    func: Callable[[np.ndarray, np.ndarray], np.ndarray] = field(compare=False)

    def __call__(self, poster, seeker):
        return self.func(poster, seeker)


def _additive(x, y):
    return np.add(x, y)


ADDITIVE = ScoreCombiner("additive", _additive)


def power_mean_combiner(p: float, seeker_share: float = 0.5) -> ScoreCombiner:
    """Weighted power mean ``((1-a) x^p + a y^p)^(1/p)`` for nonnegative inputs.

    ``p = 1`` is a rescaled additive rule; ``p -> inf`` approaches ``max``.
    """
    if p <= 0:
        raise ValueError("power mean exponent must be positive")
    if not 0.0 <= seeker_share <= 1.0:
        raise ValueError("seeker_share must lie in [0, 1]")
    a = float(seeker_share)

    def func(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return ((1.0 - a) * x**p + a * y**p) ** (1.0 / p)

    return ScoreCombiner(f"power_mean(p={p:g},a={a:g})", func)


_COMBINERS = {"additive": ADDITIVE}


def get_combiner(spec: str | ScoreCombiner | None = None) -> ScoreCombiner:
    """Resolve a combiner by name; ``None`` gives the additive default.

    Accepts ``"additive"`` and ``"power_mean:<p>[:<seeker_share>]"``.
    """
    if spec is None:
        return ADDITIVE
    if isinstance(spec, ScoreCombiner):
        return spec
    if spec in _COMBINERS:
        return _COMBINERS[spec]
    if spec.startswith("power_mean:"):
        parts = spec.split(":")[1:]
        try:
            args = [float(v) for v in parts]
            return power_mean_combiner(*args)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"bad combiner spec {spec!r}: {exc}") from None
    raise ValueError(f"unknown combiner {spec!r}")


@dataclass(frozen=True, eq=False)
class QueryInstance:
    """One seeker's query: ``n`` jobs competing for ``n`` slots.

    Attributes:
        bids: shape ``(n,)``, money per click, nonnegative.
        pctr: shape ``(n, n)``, ``pctr[j, k]`` is the probability the seeker
            clicks job ``j`` shown at slot ``k``; entries in ``[0, 1]``.
        erelevance: shape ``(n, n)``, relevance of job ``j`` at slot ``k``,
            nonnegative, unbounded above.
        seeker_weight: money per unit of relevance, nonnegative.
        seeker_id: opaque label carried through to reports.
    """

    bids: np.ndarray
    pctr: np.ndarray
    erelevance: np.ndarray
    seeker_weight: float = 0.0
    seeker_id: Hashable = None

    def __post_init__(self):
        bids = np.array(self.bids, dtype=float)
        pctr = np.array(self.pctr, dtype=float)
        erel = np.array(self.erelevance, dtype=float)
        if bids.ndim != 1 or bids.size < 1:
            raise InvalidInstanceError("bids must be a nonempty vector")
        n = bids.size
        for name, m in (("pctr", pctr), ("erelevance", erel)):
            if m.shape != (n, n):
                raise InvalidInstanceError(
                    f"{name} has shape {m.shape}, expected ({n}, {n}) to match {n} bids"
                )
        for name, arr in (("bids", bids), ("pctr", pctr), ("erelevance", erel)):
            if not np.all(np.isfinite(arr)):
                raise InvalidInstanceError(f"{name} contains non-finite values")
            if np.any(arr < 0):
                raise InvalidInstanceError(f"{name} contains negative values")
        if np.any(pctr > 1):
            raise InvalidInstanceError("pctr entries must lie in [0, 1]")
        w = float(self.seeker_weight)
        if not np.isfinite(w) or w < 0:
            raise InvalidInstanceError("seeker_weight must be finite and >= 0")
        for arr in (bids, pctr, erel):
            arr.setflags(write=False)
        object.__setattr__(self, "bids", bids)
        object.__setattr__(self, "pctr", pctr)
        object.__setattr__(self, "erelevance", erel)
        object.__setattr__(self, "seeker_weight", w)

    @property
    def n(self) -> int:
        return self.bids.size

    def with_weight(self, seeker_weight: float) -> "QueryInstance":
        return QueryInstance(self.bids, self.pctr, self.erelevance, seeker_weight, self.seeker_id)


@dataclass(frozen=True)
class SlotAveragedView:
    """Per-job means over slots of pctr, erelevance and the position-aware score."""

    pctr_bar: np.ndarray
    erelevance_bar: np.ndarray
    score_bar: np.ndarray


def as_score_matrix(scores) -> np.ndarray:
    """Validate a square, finite score matrix and return it as a float array."""
    s = np.asarray(scores, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise InvalidInstanceError(f"score matrix must be square, got shape {s.shape}")
    if s.shape[0] < 1:
        raise InvalidInstanceError("score matrix is empty")
    if not np.all(np.isfinite(s)):
        raise InvalidInstanceError("score matrix contains non-finite values")
    return s


def score_position_aware(instance: QueryInstance, combiner: ScoreCombiner | str | None = None) -> np.ndarray:
    """Return the ``(n, n)`` matrix ``s[j, k] = S(b[j] * pctr[j, k], w * erelevance[j, k])``."""
    S = get_combiner(combiner)
    poster = instance.bids[:, None] * instance.pctr
    seeker = instance.seeker_weight * instance.erelevance
    return as_score_matrix(S(poster, seeker))


def slot_average(instance: QueryInstance, scores) -> SlotAveragedView:
    s = as_score_matrix(scores)
    if s.shape[0] != instance.n:
        raise InvalidInstanceError(
            f"score matrix is {s.shape[0]}x{s.shape[0]} but instance has n={instance.n}"
        )
    return SlotAveragedView(
        pctr_bar=instance.pctr.mean(axis=1),
        erelevance_bar=instance.erelevance.mean(axis=1),
        score_bar=s.mean(axis=1),
    )


def score_position_unaware(
    view: SlotAveragedView,
    instance: QueryInstance,
    combiner: ScoreCombiner | str | None = None,
) -> np.ndarray:
    """Score each job from slot-averaged inputs: ``S(b * pctr_bar, w * erelevance_bar)``."""
    if view.pctr_bar.shape != (instance.n,) or view.erelevance_bar.shape != (instance.n,):
        raise InvalidInstanceError("slot-averaged view does not match the instance size")
    S = get_combiner(combiner)
    out = np.asarray(
        S(instance.bids * view.pctr_bar, instance.seeker_weight * view.erelevance_bar), dtype=float
    )
    return out
