import numpy as np
import pytest

from slotauction.calibration import (
    DomainError,
    ModelDomainWarning,
    PowerLawFit,
    SegmentObservation,
    UnidentifiableError,
    dispersion_report,
    fit_power_law,
    predicted_lift,
    predicted_relevance,
    read_observations_csv,
    required_weight,
    reweighted_relevance,
    synthetic_observations,
    write_observations_csv,
)


def obs(g, w, r):
    return SegmentObservation(g, w, r)


def test_two_point_fit():
    # log 2 = log z + a*log 1, log 4 = log z + a*log 4  ->  z = 2, a = 1/2
    fit = fit_power_law([obs("g", 1.0, 2.0), obs("g", 4.0, 4.0)])
    assert fit.alpha == pytest.approx(0.5, rel=1e-12)
    assert fit.z["g"] == pytest.approx(2.0, rel=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_noiseless_recovery():
    z = {"a": 1.0, "b": 2.0, "c": 5.0}
    fit = fit_power_law(synthetic_observations(0.3, z, [0.5, 1.0, 2.0, 3.0]))
    assert abs(fit.alpha - 0.3) / 0.3 <= 1e-9
    for g, zg in z.items():
        assert abs(fit.z[g] - zg) / zg <= 1e-9


def test_constant_relevance_zero_alpha():
    data = [obs(g, w, r) for g, r in (("a", 1.5), ("b", 3.0)) for w in (0.5, 1.0, 2.0)]
    with pytest.warns(ModelDomainWarning):
        fit = fit_power_law(data)
    assert fit.alpha == pytest.approx(0.0, abs=1e-15)
    assert not fit.in_model_domain


def test_unidentifiable():
    with pytest.raises(UnidentifiableError):
        fit_power_law([obs("a", 2.0, 1.0), obs("a", 2.0, 1.5), obs("b", 1.0, 3.0)])
    with pytest.raises(UnidentifiableError):
        fit_power_law([obs("a", 2.0, 1.0)])


def test_slope_identified_from_one_segment():
    fit = fit_power_law([obs("a", 1.0, 1.0), obs("a", 4.0, 2.0), obs("b", 3.0, 7.0)])
    assert fit.alpha == pytest.approx(0.5)
    assert fit.z["b"] == pytest.approx(7.0 / 3.0**0.5)


@pytest.mark.parametrize("w, r", [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0), (float("inf"), 1.0)])
def test_domain_errors(w, r):
    with pytest.raises(DomainError):
        SegmentObservation("a", w, r)


def test_per_segment_diagnostic():
    data = synthetic_observations(0.4, {"a": 1.0}, [1.0, 2.0]) + synthetic_observations(0.6, {"b": 1.0}, [1.0, 2.0])
    fit = fit_power_law(data, per_segment=True)
    assert fit.segment_alpha["a"] == pytest.approx(0.4)
    assert fit.segment_alpha["b"] == pytest.approx(0.6)
    assert fit.alpha == pytest.approx(0.5)


def fit_of(alpha, z):
    return PowerLawFit(alpha=alpha, z=z, r_squared=1.0, n_obs=0)


def test_lift_values():
    f = fit_of(0.5, {"g": 2.0})
    assert predicted_lift(f, 3.0, 3.0) == 0.0
    assert predicted_lift(f, 1.0, 4.0) == pytest.approx(1.0)
    assert predicted_lift(f, 4.0, 1.0) == pytest.approx(-0.5)
    with pytest.raises(DomainError):
        predicted_lift(f, 0.0, 1.0)


def test_lift_independent_of_efficiency():
    f = fit_of(0.37, {"a": 0.1, "b": 3.0, "c": 80.0})
    lifts = [predicted_lift(f, 1.3, 2.6, g) for g in f.z]
    assert max(lifts) - min(lifts) <= 1e-12


def test_required_weight():
    f = fit_of(0.5, {"g": 2.0})
    assert required_weight(f, "g", 6.0) == pytest.approx(9.0, rel=1e-12)
    assert required_weight(f, "g", 2.0) == pytest.approx(1.0, rel=1e-12)
    assert required_weight(f, "g", 2.0 * 2.0**0.5) == pytest.approx(2.0, rel=1e-12)
    with pytest.raises(KeyError):
        required_weight(f, "missing", 1.0)
    with pytest.raises(DomainError):
        required_weight(fit_of(0.0, {"g": 1.0}), "g", 1.0)


def test_inversion_consistency(rng):
    for _ in range(200):
        f = fit_of(float(rng.uniform(0.05, 0.95)), {"g": float(rng.uniform(0.1, 10))})
        target = float(rng.uniform(0.1, 10))
        w = required_weight(f, "g", target)
        assert abs(predicted_relevance(f, "g", w) - target) / target <= 1e-12


def test_dispersion_identical():
    v = [1.0, 2.0, 3.0, 4.0]
    rep = dispersion_report(v, v)
    assert rep.changes() == {"mean": 0.0, "median": 0.0, "iqr": 0.0}


def test_dispersion_to_common_target():
    z = {"a": 0.5, "b": 1.0, "c": 2.0, "d": 4.0}
    data = synthetic_observations(0.4, z, [1.0])
    fit = fit_of(0.4, z)
    weights = {g: required_weight(fit, g, 1.5) for g in z}
    rep = dispersion_report([o.relevance for o in data], reweighted_relevance(fit, data, weights))
    assert rep.after.iqr == pytest.approx(0.0, abs=1e-12)
    assert rep.before.iqr > 0


def test_dispersion_noisy_cohort_shrinks(rng):
    z = {f"s{i}": float(v) for i, v in enumerate(rng.uniform(0.3, 3.0, 40))}
    data = synthetic_observations(0.5, z, [0.8, 1.0, 1.25], reps=5, noise_sigma=0.05, rng=rng)
    fit = fit_power_law(data)
    weights = {g: required_weight(fit, g, 1.0) for g in z}
    rep = dispersion_report([o.relevance for o in data], reweighted_relevance(fit, data, weights))
    assert rep.after.iqr < rep.before.iqr


def test_empty_dispersion():
    with pytest.raises(ValueError):
        dispersion_report([], [1.0])


def test_ci_and_dict():
    rng = np.random.default_rng(3)
    data = synthetic_observations(0.3, {"a": 1.0, "b": 2.0}, list(np.linspace(0.5, 2, 10)), noise_sigma=0.05, rng=rng)
    fit = fit_power_law(data)
    lo, hi = fit.alpha_ci()
    assert lo < fit.alpha < hi
    d = fit.to_dict()
    assert set(d["z"]) == {"a", "b"} and d["alpha_in_unit_interval"]


def test_csv_roundtrip(tmp_path):
    data = synthetic_observations(0.3, {"a": 1.0, "b": 2.0}, [1.0, 2.0])
    p = tmp_path / "obs.csv"
    write_observations_csv(p, data)
    back = read_observations_csv(p)
    assert [(o.segment_id, o.seeker_weight, o.relevance) for o in back] == [
        (o.segment_id, o.seeker_weight, o.relevance) for o in data
    ]
