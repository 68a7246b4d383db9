"""Power-law calibration of relevance against the Seeker-Weight.

The model is ``relevance_g = z_g * w ** alpha`` for seeker segment ``g``.
Taking logs gives a fixed-effects regression with one shared slope
``alpha`` and a per-segment intercept ``log z_g``.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np
from scipy import stats


class DomainError(ValueError):
    pass


class UnidentifiableError(ValueError):
    pass


class ModelDomainWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SegmentObservation:
    segment_id: Hashable
    seeker_weight: float
    relevance: float
    arm: str | None = None

    def __post_init__(self):
        for name in ("seeker_weight", "relevance"):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be finite and > 0, got {value!r}")
            object.__setattr__(self, name, value)


@dataclass(frozen=True)
class PowerLawFit:
    """Fitted elasticity and per-segment efficiencies.

    ``alpha_stderr`` is the OLS standard error of the shared slope
    (NaN when there are no residual degrees of freedom).
    ``segment_alpha`` is only filled by the per-segment diagnostic fit.
    """

    alpha: float
    z: Mapping[Hashable, float]
    r_squared: float
    n_obs: int
    alpha_stderr: float = float("nan")
    dof: int = 0
    segment_alpha: Mapping[Hashable, float] | None = field(default=None)

    @property
    def in_model_domain(self) -> bool:
        return 0.0 < self.alpha < 1.0

    def alpha_ci(self, level: float = 0.95) -> tuple[float, float]:
        if self.dof <= 0 or not math.isfinite(self.alpha_stderr):
            return (float("-inf"), float("inf"))
        half = stats.t.ppf(0.5 + level / 2, self.dof) * self.alpha_stderr
        return (self.alpha - half, self.alpha + half)

    def to_dict(self) -> dict:
        lo, hi = self.alpha_ci()
        out = {
            "alpha": self.alpha,
            "r_squared": self.r_squared,
            "z": {str(k): v for k, v in self.z.items()},
            "n_obs": self.n_obs,
            "alpha_stderr": None if math.isnan(self.alpha_stderr) else self.alpha_stderr,
            "alpha_ci95": None if math.isinf(lo) else [lo, hi],
            "alpha_in_unit_interval": self.in_model_domain,
        }
        if self.segment_alpha is not None:
            out["segment_alpha"] = {str(k): v for k, v in self.segment_alpha.items()}
        return out


def _arrays(observations: Sequence[SegmentObservation]):
    segments = list(dict.fromkeys(o.segment_id for o in observations))
    index = {g: i for i, g in enumerate(segments)}
    seg = np.array([index[o.segment_id] for o in observations])
    logw = np.log([o.seeker_weight for o in observations])
    logr = np.log([o.relevance for o in observations])
    return segments, seg, logw, logr


def fit_power_law(observations: Iterable[SegmentObservation], per_segment: bool = False) -> PowerLawFit:
    """Least squares on ``log rel = log z_g + alpha * log w`` with shared ``alpha``.

    With ``per_segment=True`` each identifiable segment also gets its own
    slope in ``segment_alpha`` (diagnostic only; ``alpha`` stays shared).
    A fitted ``alpha`` outside ``(0, 1)`` is returned with a
    :class:`ModelDomainWarning` rather than rejected.
    """
    obs = list(observations)
    if len(obs) < 2:
        raise UnidentifiableError("need at least two observations")
    for o in obs:
        if not isinstance(o, SegmentObservation):
            raise TypeError("observations must be SegmentObservation instances")
    segments, seg, logw, logr = _arrays(obs)
    G = len(segments)
    # within-segment demeaning isolates the slope
    counts = np.bincount(seg, minlength=G)
    mean_w = np.bincount(seg, logw, G) / counts
    mean_r = np.bincount(seg, logr, G) / counts
    dw = logw - mean_w[seg]
    dr = logr - mean_r[seg]
    sxx = float(dw @ dw)
    scale = max(1.0, float(np.max(np.abs(logw))))
    if sxx <= (1e-12 * scale) ** 2 * len(obs):
        raise UnidentifiableError("seeker weight does not vary within any segment; elasticity is unidentifiable")
    alpha = float(dw @ dr) / sxx
    log_z = mean_r - alpha * mean_w
    resid = logr - log_z[seg] - alpha * logw
    ssr = float(resid @ resid)
    centred = logr - logr.mean()
    sst = float(centred @ centred)
    if sst > 0:
        r2 = 1.0 - ssr / sst
    else:
        r2 = 1.0 if ssr <= 1e-24 else 0.0
    dof = len(obs) - G - 1
    stderr = math.sqrt(ssr / dof / sxx) if dof > 0 else float("nan")

    seg_alpha = None
    if per_segment:
        seg_alpha = {}
        for i, g in enumerate(segments):
            m = seg == i
            sx = float(dw[m] @ dw[m])
            seg_alpha[g] = float(dw[m] @ dr[m]) / sx if sx > 0 else float("nan")

    fit = PowerLawFit(
        alpha=alpha,
        z={g: float(math.exp(log_z[i])) for i, g in enumerate(segments)},
        r_squared=r2,
        n_obs=len(obs),
        alpha_stderr=stderr,
        dof=dof,
        segment_alpha=seg_alpha,
    )
    if not fit.in_model_domain:
        warnings.warn(f"fitted elasticity {alpha:.6g} lies outside (0, 1)", ModelDomainWarning, stacklevel=2)
    return fit


def _positive(name, value):
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise DomainError(f"{name} must be finite and > 0, got {value!r}")
    return value


def predicted_relevance(fit: PowerLawFit, segment_id, seeker_weight: float) -> float:
    if segment_id not in fit.z:
        raise KeyError(f"segment {segment_id!r} not in fit")
    return fit.z[segment_id] * _positive("seeker_weight", seeker_weight) ** fit.alpha


def predicted_lift(fit: PowerLawFit, w_old: float, w_new: float, segment_id=None) -> float:
    """Relative relevance change when the weight moves from ``w_old`` to ``w_new``.

    Without ``segment_id`` this is the closed form ``(w_new/w_old)**alpha - 1``.
    With it, the lift is computed from the segment's predicted relevance
    levels, which cancels ``z_g``.
    """
    w_old = _positive("w_old", w_old)
    w_new = _positive("w_new", w_new)
    if segment_id is None:
        return (w_new / w_old) ** fit.alpha - 1.0
    return predicted_relevance(fit, segment_id, w_new) / predicted_relevance(fit, segment_id, w_old) - 1.0


def required_weight(fit: PowerLawFit, segment_id, target_relevance: float) -> float:
    """Weight at which the segment's predicted relevance hits ``target_relevance``."""
    if fit.alpha <= 0:
        raise DomainError("cannot invert the model when alpha <= 0")
    if segment_id not in fit.z:
        raise KeyError(f"segment {segment_id!r} not in fit")
    target = _positive("target_relevance", target_relevance)
    return (target / fit.z[segment_id]) ** (1.0 / fit.alpha)


@dataclass(frozen=True)
class DistributionStats:
    mean: float
    median: float
    q25: float
    q75: float

    @property
    def iqr(self) -> float:
        return self.q75 - self.q25


@dataclass(frozen=True)
class DispersionReport:
    before: DistributionStats
    after: DistributionStats

    def changes(self) -> dict:
        return {
            "mean": self.after.mean - self.before.mean,
            "median": self.after.median - self.before.median,
            "iqr": self.after.iqr - self.before.iqr,
        }

    def rows(self):
        for label, s in (("before", self.before), ("after", self.after)):
            yield {"population": label, "mean": s.mean, "median": s.median,
                   "q25": s.q25, "q75": s.q75, "iqr": s.iqr}


def describe(values) -> DistributionStats:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("cannot describe an empty population")
    q25, med, q75 = np.percentile(v, [25, 50, 75])
    return DistributionStats(float(v.mean()), float(med), float(q25), float(q75))


def dispersion_report(before, after) -> DispersionReport:
    """Compare relevance distributions before and after reweighting."""
    return DispersionReport(describe(before), describe(after))


def reweighted_relevance(fit: PowerLawFit, observations: Sequence[SegmentObservation], new_weights: Mapping) -> np.ndarray:
    """Move each observation to its segment's new weight along the fitted curve.

    The observation's residual is kept: ``rel * (w_new / w_obs) ** alpha``.
    """
    return np.array([
        o.relevance * (_positive("new weight", new_weights[o.segment_id]) / o.seeker_weight) ** fit.alpha
        for o in observations
    ])


def read_observations_csv(path) -> list[SegmentObservation]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"segment_id", "seeker_weight", "relevance"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise ValueError(f"observations CSV needs columns {sorted(required)}")
        out = []
        for row in reader:
            out.append(SegmentObservation(
                row["segment_id"], float(row["seeker_weight"]), float(row["relevance"]),
                row.get("arm") or None,
            ))
    return out


def write_observations_csv(path, observations: Iterable[SegmentObservation]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["segment_id", "seeker_weight", "relevance", "arm"])
        for o in observations:
            writer.writerow([o.segment_id, repr(o.seeker_weight), repr(o.relevance), o.arm or ""])


def synthetic_observations(
    alpha: float,
    z: Mapping[Hashable, float],
    weights: Sequence[float],
    reps: int = 1,
    noise_sigma: float = 0.0,
    rng: np.random.Generator | None = None,
) -> list[SegmentObservation]:
    """Draw ``z_g * w**alpha * exp(noise)`` with ``noise ~ N(0, noise_sigma^2)``."""
    if noise_sigma > 0 and rng is None:
        raise ValueError("noisy synthesis needs an rng")
    out = []
    for g, zg in z.items():
        for _ in range(reps):
            for w in weights:
                eps = rng.normal(0.0, noise_sigma) if noise_sigma > 0 else 0.0
                out.append(SegmentObservation(g, w, zg * w**alpha * math.exp(eps)))
    return out
