"""Tabular discounted MDP for choosing Seeker-Weights over time.

States are discretized snapshots of a seeker's auction (bids and
eRelevances); actions are points on a Seeker-Weight grid. Gains are given as
a ``(states, actions)`` table and the transition kernel as a
``(states, actions, states)`` array of probability rows.
"""
from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class ModelError(ValueError):
    pass


class NonConvergenceError(RuntimeError):
    def __init__(self, iterations: int, residual: float):
        super().__init__(f"value iteration did not converge in {iterations} iterations (residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class UnvisitedPairsWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class MdpModel:
    gain: np.ndarray
    kernel: np.ndarray
    discount: float
    actions: np.ndarray | None = None  # Seeker-Weight value of each action
    states: tuple | None = None  # optional state labels

    def __post_init__(self):
        gain = np.array(self.gain, dtype=float)
        kernel = np.array(self.kernel, dtype=float)
        if gain.ndim != 2 or gain.shape[0] < 1 or gain.shape[1] < 1:
            raise ModelError(f"gain must be a nonempty (states, actions) table, got shape {gain.shape}")
        S, A = gain.shape
        if kernel.shape != (S, A, S):
            raise ModelError(f"kernel shape {kernel.shape} does not match gain shape {gain.shape}")
        if not np.all(np.isfinite(gain)):
            raise ModelError("gain table must be finite")
        if not np.all(np.isfinite(kernel)) or np.any(kernel < 0):
            raise ModelError("kernel entries must be finite and >= 0")
        if np.any(np.abs(kernel.sum(axis=2) - 1.0) > 1e-9):
            raise ModelError("every kernel row must sum to 1")
        d = float(self.discount)
        if not 0.0 <= d < 1.0:
            raise ModelError(f"discount must lie in [0, 1), got {d}")
        actions = None
        if self.actions is not None:
            actions = np.array(self.actions, dtype=float)
            if actions.shape != (A,):
                raise ModelError(f"expected {A} action weights, got {actions.shape}")
            actions.setflags(write=False)
        if self.states is not None and len(self.states) != S:
            raise ModelError(f"expected {S} state labels, got {len(self.states)}")
        gain.setflags(write=False)
        kernel.setflags(write=False)
        object.__setattr__(self, "gain", gain)
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "discount", d)
        object.__setattr__(self, "actions", actions)
        if self.states is not None:
            object.__setattr__(self, "states", tuple(self.states))

    @property
    def state_count(self) -> int:
        return self.gain.shape[0]

    @property
    def action_count(self) -> int:
        return self.gain.shape[1]

    def to_dict(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "discount": self.discount,
            "gain": self.gain.tolist(),
            "kernel": self.kernel.tolist(),
        }
        if self.actions is not None:
            out["actions"] = self.actions.tolist()
        if self.states is not None:
            out["states"] = list(self.states)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "MdpModel":
        version = d.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ModelError(f"unsupported schema_version {version}")
        try:
            return cls(d["gain"], d["kernel"], d["discount"], d.get("actions"), d.get("states"))
        except KeyError as exc:
            raise ModelError(f"model is missing {exc.args[0]!r}") from None


class ValueIterationResult(NamedTuple):
    values: np.ndarray
    policy: np.ndarray
    iterations: int
    residual: float


def action_values(model: MdpModel, v: np.ndarray) -> np.ndarray:
    """``Gain(x, a) + discount * E[v(x') | x, a]`` as an ``(S, A)`` table."""
    return model.gain + model.discount * (model.kernel @ np.asarray(v, dtype=float))


def bellman_backup(model: MdpModel, v) -> tuple[np.ndarray, np.ndarray]:
    """One Bellman optimality backup; ties go to the smallest action index."""
    v = np.asarray(v, dtype=float)
    if v.shape != (model.state_count,):
        raise ModelError(f"value function has shape {v.shape}, expected ({model.state_count},)")
    q = action_values(model, v)
    policy = np.argmax(q, axis=1)
    return q[np.arange(model.state_count), policy], policy


def value_iteration(model: MdpModel, tolerance: float = 1e-8, max_iters: int = 100_000) -> ValueIterationResult:
    """Iterate Bellman backups from ``V = 0``.

    Stops once ``discount / (1 - discount) * ||V_m - V_{m-1}||`` is at most
    ``tolerance``, which bounds the distance from the returned values to the
    fixed point by ``tolerance``. With ``discount == 0`` this happens after
    one backup. The returned policy is greedy for the returned values, and
    ``residual`` is the last sup-norm change.
    """
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    d = model.discount
    v = np.zeros(model.state_count)
    residual = float("inf")
    for m in range(1, max_iters + 1):
        v_new, _ = bellman_backup(model, v)
        residual = float(np.max(np.abs(v_new - v)))
        v = v_new
        if d * residual <= tolerance * (1.0 - d):
            _, policy = bellman_backup(model, v)
            return ValueIterationResult(v, policy, m, residual)
    raise NonConvergenceError(max_iters, residual)


def policy_value(model: MdpModel, policy) -> np.ndarray:
    """Exact value of a stationary deterministic policy: solve ``(I - dP) V = G``."""
    policy = np.asarray(policy, dtype=np.intp)
    idx = np.arange(model.state_count)
    P = model.kernel[idx, policy]
    G = model.gain[idx, policy]
    return np.linalg.solve(np.eye(model.state_count) - model.discount * P, G)


# --------------------------------------------------------------------------
# Learning the kernel from data


class Transition(NamedTuple):
    state: int
    action: int
    next_state: int


@dataclass(frozen=True)
class Episode:
    transitions: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "transitions", tuple(Transition(*map(int, t)) for t in self.transitions))

    def __len__(self):
        return len(self.transitions)

    def __iter__(self):
        return iter(self.transitions)


def visit_counts(episodes: Iterable[Episode], state_count: int, action_count: int) -> np.ndarray:
    counts = np.zeros((state_count, action_count, state_count))
    for ep in episodes:
        for s, a, s2 in ep:
            if not (0 <= s < state_count and 0 <= s2 < state_count and 0 <= a < action_count):
                raise IndexError(f"transition {(s, a, s2)} out of range")
            counts[s, a, s2] += 1
    return counts


def estimate_kernel(
    episodes: Iterable[Episode], state_count: int, action_count: int, smoothing: float = 0.0
) -> np.ndarray:
    """Frequency estimate ``(count(x,a,x') + l) / (count(x,a) + l * S)``.

    Pairs never visited with ``smoothing == 0`` get a uniform row and raise
    an :class:`UnvisitedPairsWarning` listing them.
    """
    if smoothing < 0:
        raise ValueError("smoothing must be >= 0")
    counts = visit_counts(episodes, state_count, action_count) + smoothing
    totals = counts.sum(axis=2, keepdims=True)
    unvisited = totals[..., 0] == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        kernel = np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), 1.0 / state_count)
    if unvisited.any():
        pairs = [tuple(map(int, p)) for p in np.argwhere(unvisited)]
        warnings.warn(f"unvisited (state, action) pairs given uniform rows: {pairs}", UnvisitedPairsWarning, stacklevel=2)
    return kernel


def learn_and_plan(
    episodes: Iterable[Episode],
    gain,
    discount: float,
    smoothing: float = 0.0,
    tolerance: float = 1e-8,
    max_iters: int = 100_000,
    actions=None,
) -> tuple[MdpModel, ValueIterationResult]:
    """Estimate the kernel from episodes, then solve the resulting model."""
    gain = np.asarray(gain, dtype=float)
    if gain.ndim != 2:
        raise ModelError("gain must be a (states, actions) table")
    S, A = gain.shape
    kernel = estimate_kernel(episodes, S, A, smoothing)
    model = MdpModel(gain, kernel, discount, actions)
    return model, value_iteration(model, tolerance, max_iters)


def sample_episodes(
    kernel,
    rng: np.random.Generator,
    episode_count: int,
    episode_length: int,
    policy=None,
) -> list[Episode]:
    """Roll out episodes from a known kernel.

    Start states are uniform; actions are uniform unless a deterministic
    ``policy`` is given.
    """
    kernel = np.asarray(kernel, dtype=float)
    S, A, _ = kernel.shape
    cdf = np.cumsum(kernel, axis=2)
    cdf[..., -1] = 1.0
    out = []
    for _ in range(episode_count):
        s = int(rng.integers(S))
        steps = []
        for _ in range(episode_length):
            a = int(rng.integers(A)) if policy is None else int(policy[s])
            s2 = int(np.searchsorted(cdf[s, a], rng.random(), side="right"))
            steps.append((s, a, s2))
            s = s2
        out.append(Episode(steps))
    return out


def read_episodes_csv(path) -> list[Episode]:
    """Read ``state,action,next_state`` rows; an optional ``episode`` column groups them."""
    groups: dict = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"state", "action", "next_state"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise ValueError(f"episodes CSV needs columns {sorted(required)}")
        for row in reader:
            key = row.get("episode", "0")
            groups.setdefault(key, []).append((int(row["state"]), int(row["action"]), int(row["next_state"])))
    return [Episode(steps) for steps in groups.values()]


def write_episodes_csv(path, episodes: Sequence[Episode]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["episode", "state", "action", "next_state"])
        for i, ep in enumerate(episodes):
            for s, a, s2 in ep:
                writer.writerow([i, s, a, s2])


# --------------------------------------------------------------------------
# States from auction snapshots


@dataclass(frozen=True)
class GridSpec:
    """Per-feature bin edges; features default to (mean bid, mean eRelevance).

    Bins are left-closed ``[e_i, e_{i+1})`` except the last, which also
    includes its upper edge. Values outside the range are clamped to the
    edge bins with a logged warning.
    """

    edges: tuple

    def __post_init__(self):
        edges = tuple(np.asarray(e, dtype=float) for e in self.edges)
        for e in edges:
            if e.ndim != 1 or e.size < 2 or np.any(np.diff(e) <= 0):
                raise ValueError("each feature needs at least two strictly increasing edges")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def uniform(cls, ranges: Sequence[tuple[float, float]], bins: Sequence[int]) -> "GridSpec":
        return cls(tuple(np.linspace(lo, hi, b + 1) for (lo, hi), b in zip(ranges, bins)))

    @classmethod
    def quantile(cls, samples, bins: Sequence[int]) -> "GridSpec":
        """Edges at empirical quantiles of ``samples`` (shape ``(m, features)``)."""
        samples = np.asarray(samples, dtype=float)
        edges = []
        for f, b in enumerate(bins):
            e = np.unique(np.quantile(samples[:, f], np.linspace(0, 1, b + 1)))
            if e.size < 2:
                raise ValueError(f"feature {f} has no spread; cannot build quantile bins")
            edges.append(e)
        return cls(tuple(edges))

    @property
    def shape(self) -> tuple:
        return tuple(e.size - 1 for e in self.edges)

    @property
    def state_count(self) -> int:
        return int(np.prod(self.shape))


def snapshot_features(bids, erelevance) -> np.ndarray:
    return np.array([float(np.mean(bids)), float(np.mean(erelevance))])


def discretize_state(bids, erelevance, grid: GridSpec, features=None) -> int:
    """Row-major bin index of the snapshot's summary features."""
    values = snapshot_features(bids, erelevance) if features is None else np.asarray(features, dtype=float)
    if values.shape != (len(grid.edges),):
        raise ValueError(f"expected {len(grid.edges)} features, got {values.shape}")
    idx = []
    for x, e in zip(values, grid.edges):
        nb = e.size - 1
        if x < e[0] or x > e[-1]:
            logger.warning("feature value %r outside [%r, %r]; clamped to edge bin", float(x), float(e[0]), float(e[-1]))
        b = int(np.searchsorted(e, x, side="right")) - 1
        idx.append(min(max(b, 0), nb - 1))
    return int(np.ravel_multi_index(idx, grid.shape))


def build_gain_table(instances_by_state: Sequence[Sequence], actions: Sequence[float], mechanism: str = "vcg",
                     combiner="additive", event: str = "click") -> np.ndarray:
    """Default gain: mean of ``revenue + w * relevance`` over each state's instances.

    Every representative instance is re-run through the allocation pipeline
    with its Seeker-Weight set to each action's value.
    """
    from .simulation import allocate_both

    if mechanism not in ("gfp", "vcg"):
        raise ValueError("mechanism must be 'gfp' or 'vcg'")
    table = np.zeros((len(instances_by_state), len(actions)))
    for s, instances in enumerate(instances_by_state):
        if not instances:
            raise ValueError(f"state {s} has no representative instances")
        for a, w in enumerate(actions):
            vals = []
            for inst in instances:
                gfp, vcg = allocate_both(inst.with_weight(w), combiner, event)
                o = vcg if mechanism == "vcg" else gfp
                vals.append(o.revenue + w * o.relevance)
            table[s, a] = float(np.mean(vals))
    return table


def result_to_dict(model: MdpModel, result: ValueIterationResult, tolerance: float) -> dict:
    out = {
        "schema_version": SCHEMA_VERSION,
        "values": result.values.tolist(),
        "policy": result.policy.tolist(),
        "iterations": result.iterations,
        "residual": result.residual,
        "tolerance": tolerance,
        "discount": model.discount,
    }
    if model.actions is not None:
        out["policy_weights"] = model.actions[result.policy].tolist()
    return out


def load_model(path) -> MdpModel:
    with open(path) as fh:
        return MdpModel.from_dict(json.load(fh))
