"""Monte-Carlo comparison of GFP ranking and position-aware matching.

For every seeker the harness samples bids, position-aware pCTR, a Seeker-Weight
and position-aware eRelevance (in that order), scores the instance, ranks it
with GFP on slot-averaged scores and with the exact matching on the full score
matrix, and records revenue and relevance of both slates.

Each (seed, n, seeker index) triple owns an independent Philox stream, so a
seeker's draws do not depend on which worker evaluates it or in what order.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping

import numpy as np

from . import allocation, core, metrics

SCHEMA_VERSION = 1
SUMMARY_COLUMNS = (
    "n", "rev_gfp", "rev_vcg", "rel_gfp", "rel_vcg",
    "se_rev_gfp", "se_rev_vcg", "se_rel_gfp", "se_rel_vcg",
)


class ConfigError(ValueError):
    pass


class DominanceViolation(RuntimeError):
    """The exact matching scored below the GFP slate on some instance."""


_SCALAR_FAMILIES = {
    "lognormal": ("mean", "sigma"),
    "uniform": ("low", "high"),
    "constant": ("value",),
}
_POSITIONAL_KEYS = ("quality_low", "quality_high", "decay", "noise_low", "noise_high", "clip_max")


@dataclass(frozen=True)
class DistSpec:
    """A named distribution family with its parameters.

    Scalar families (``lognormal``, ``uniform``, ``constant``) draw i.i.d.
    values. The ``positional`` family builds an ``n x n`` matrix
    ``quality[j] * decay[k] * noise[j, k]`` with ``quality ~ U(quality_low,
    quality_high)``, ``decay[k] = 1/log2(k + 2)`` (or 1 with ``decay="none"``)
    and ``noise ~ U(noise_low, noise_high)``, clipped to ``[0, clip_max]``.
    """

    family: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "params", dict(self.params))
        self.validate()

    def validate(self):
        p = self.params
        if self.family in _SCALAR_FAMILIES:
            keys = _SCALAR_FAMILIES[self.family]
            missing = [k for k in keys if k not in p]
            if missing:
                raise ConfigError(f"{self.family} needs parameters {missing}")
            if self.family == "lognormal" and not p["sigma"] >= 0:
                raise ConfigError("lognormal sigma must be >= 0")
            if self.family == "uniform" and not p["low"] <= p["high"]:
                raise ConfigError("uniform needs low <= high")
            if self.family == "constant" and not math.isfinite(p["value"]):
                raise ConfigError("constant value must be finite")
        elif self.family == "positional":
            unknown = set(p) - set(_POSITIONAL_KEYS)
            if unknown:
                raise ConfigError(f"unknown positional parameters {sorted(unknown)}")
            full = self.positional_params()
            if not 0 <= full["quality_low"] <= full["quality_high"]:
                raise ConfigError("positional needs 0 <= quality_low <= quality_high")
            if not 0 <= full["noise_low"] <= full["noise_high"]:
                raise ConfigError("positional needs 0 <= noise_low <= noise_high")
            if full["decay"] not in ("log2", "none"):
                raise ConfigError("positional decay must be 'log2' or 'none'")
        else:
            raise ConfigError(f"unknown distribution family {self.family!r}")

    def positional_params(self) -> dict:
        full = {
            "quality_low": 0.2, "quality_high": 1.0, "decay": "log2",
            "noise_low": 0.8, "noise_high": 1.2, "clip_max": None,
        }
        full.update(self.params)
        return full

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        p = self.params
        if self.family == "lognormal":
            return rng.lognormal(p["mean"], p["sigma"], size)
        if self.family == "uniform":
            return rng.uniform(p["low"], p["high"], size)
        if self.family == "constant":
            return np.full(size, float(p["value"]))
        raise ConfigError(f"{self.family} is not a scalar family")

    def sample_matrix(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.family != "positional":
            return self.sample(rng, (n, n))
        p = self.positional_params()
        quality = rng.uniform(p["quality_low"], p["quality_high"], n)
        noise = rng.uniform(p["noise_low"], p["noise_high"], (n, n))
        if p["decay"] == "log2":
            decay = 1.0 / np.log2(np.arange(n) + 2.0)
        else:
            decay = np.ones(n)
        m = quality[:, None] * decay[None, :] * noise
        return np.clip(m, 0.0, p["clip_max"]) if p["clip_max"] is not None else m

    def to_dict(self) -> dict:
        return {"family": self.family, **self.params}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "DistSpec":
        if not isinstance(d, Mapping) or "family" not in d:
            raise ConfigError(f"distribution spec needs a 'family' key: {d!r}")
        params = {k: v for k, v in d.items() if k != "family"}
        return cls(d["family"], params)


def default_bid_dist():
    return DistSpec("lognormal", {"mean": 0.0, "sigma": 0.5})


def default_pctr_dist():
    return DistSpec("positional", {"clip_max": 1.0})


def default_erelevance_dist():
    return DistSpec("positional", {})


def default_weight_dist():
    return DistSpec("uniform", {"low": 0.5, "high": 2.0})


@dataclass(frozen=True)
class SimulationConfig:
    seeker_count: int = 1000
    depth_grid: tuple = (2, 4, 8, 16, 32)
    seed: int = 0
    bid_dist: DistSpec = field(default_factory=default_bid_dist)
    pctr_dist: DistSpec = field(default_factory=default_pctr_dist)
    erelevance_dist: DistSpec = field(default_factory=default_erelevance_dist)
    weight_dist: DistSpec = field(default_factory=default_weight_dist)
    combiner: str = "additive"
    event: str = "click"

    def __post_init__(self):
        object.__setattr__(self, "depth_grid", tuple(int(n) for n in self.depth_grid))
        if int(self.seeker_count) < 1:
            raise ConfigError("seeker_count must be >= 1")
        if not self.depth_grid or min(self.depth_grid) < 1:
            raise ConfigError("depth_grid must be a nonempty list of n >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.weight_dist.family == "positional" or self.bid_dist.family == "positional":
            raise ConfigError("bids and seeker weight need a scalar family")
        if self.event not in metrics.EVENTS:
            raise ConfigError(f"event must be one of {metrics.EVENTS}")
        try:
            core.get_combiner(self.combiner)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "seeker_count": self.seeker_count,
            "depth_grid": list(self.depth_grid),
            "seed": self.seed,
            "bid_dist": self.bid_dist.to_dict(),
            "pctr_dist": self.pctr_dist.to_dict(),
            "erelevance_dist": self.erelevance_dist.to_dict(),
            "weight_dist": self.weight_dist.to_dict(),
            "combiner": self.combiner,
            "event": self.event,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SimulationConfig":
        if not isinstance(d, Mapping):
            raise ConfigError("simulation config must be a JSON object")
        d = dict(d)
        version = d.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version}")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        for key in ("bid_dist", "pctr_dist", "erelevance_dist", "weight_dist"):
            if key in d:
                d[key] = DistSpec.from_dict(d[key])
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None


@dataclass
class SimulationReport:
    config: SimulationConfig
    summaries: dict  # n -> PopulationSummary
    strict_dominance: dict  # n -> count of seekers where vcg total > gfp total
    rows: dict | None = None  # n -> list of (gfp, vcg) outcomes, seeker order

    @property
    def seed(self) -> int:
        return self.config.seed


def seeker_rng(seed: int, n: int, seeker_index: int) -> np.random.Generator:
    """Counter-based stream keyed by ``(seed, n, seeker_index)``."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), int(n), int(seeker_index)])
    return np.random.Generator(np.random.Philox(ss))


def sample_instance(config: SimulationConfig, n: int, rng: np.random.Generator, seeker_id=None) -> core.QueryInstance:
    bids = config.bid_dist.sample(rng, n)
    pctr = config.pctr_dist.sample_matrix(rng, n)
    weight = float(config.weight_dist.sample(rng, 1)[0])
    erel = config.erelevance_dist.sample_matrix(rng, n)
    try:
        return core.QueryInstance(bids, pctr, erel, weight, seeker_id)
    except core.InvalidInstanceError as exc:
        raise ConfigError(f"sampled instance is invalid: {exc}") from None


def allocate_both(instance: core.QueryInstance, combiner="additive", event: str = "click"):
    """Run GFP and the exact matching on one instance; returns (gfp, vcg) outcomes."""
    scores = core.score_position_aware(instance, combiner)
    view = core.slot_average(instance, scores)
    gfp_match = allocation.gfp_rank(view.score_bar)
    vcg_match = allocation.match_optimal(scores).matching
    gfp = metrics.evaluate(instance, gfp_match, "gfp", scores, event)
    vcg = metrics.evaluate(instance, vcg_match, "vcg", scores, event)
    tol = 1e-9 * max(1.0, float(np.max(np.abs(scores)))) * instance.n
    if vcg.total_score < gfp.total_score - tol:
        raise DominanceViolation(
            f"seeker {instance.seeker_id}: matching total {vcg.total_score} < GFP total {gfp.total_score}"
        )
    return gfp, vcg


def simulate_seeker(config: SimulationConfig, n: int, seeker_index: int, rng: np.random.Generator | None = None):
    if rng is None:
        rng = seeker_rng(config.seed, n, seeker_index)
    instance = sample_instance(config, n, rng, seeker_id=seeker_index)
    return allocate_both(instance, config.combiner, config.event)


def _simulate_block(config: SimulationConfig, n: int, start: int, stop: int):
    return [simulate_seeker(config, n, i) for i in range(start, stop)]


def _blocks(count: int, parts: int):
    step = max(1, math.ceil(count / parts))
    return [(s, min(count, s + step)) for s in range(0, count, step)]


def run_sweep(config: SimulationConfig, keep_rows: bool = False, workers: int = 1) -> SimulationReport:
    """Simulate ``seeker_count`` seekers at every depth and aggregate.

    ``workers > 1`` spreads seekers over processes; the report is identical
    for any worker count.
    """
    summaries, strict, rows = {}, {}, {} if keep_rows else None
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for n in config.depth_grid:
            if pool is None:
                pairs = _simulate_block(config, n, 0, config.seeker_count)
            else:
                futures = [
                    pool.submit(_simulate_block, config, n, a, b)
                    for a, b in _blocks(config.seeker_count, workers * 4)
                ]
                pairs = [pair for fut in futures for pair in fut.result()]
            summaries[n] = metrics.aggregate(pairs)
            strict[n] = sum(1 for g, v in pairs if v.total_score > g.total_score)
            if keep_rows:
                rows[n] = pairs
    finally:
        if pool is not None:
            pool.shutdown()
    return SimulationReport(config, summaries, strict, rows)


def summary_csv(report: SimulationReport) -> str:
    """Summary table as CSV text, floats written with ``repr`` for exact round-trips."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for n in report.config.depth_grid:
        s = report.summaries[n]
        d = asdict(s)
        writer.writerow([n] + [repr(float(d[c])) for c in SUMMARY_COLUMNS[1:]])
    return buf.getvalue()


def per_seeker_rows(report: SimulationReport):
    if report.rows is None:
        raise ValueError("report was produced without keep_rows=True")
    for n in report.config.depth_grid:
        yield from metrics.outcome_rows(n, report.rows[n])
