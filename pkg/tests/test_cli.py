import csv
import json

import numpy as np
import pytest

from slotauction.calibration import synthetic_observations, write_observations_csv
from slotauction.cli import main

SMALL_SIM = {
    "schema_version": 1,
    "seeker_count": 60,
    "depth_grid": [2, 3, 5],
    "seed": 17,
}


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return path


def read_json(path):
    return json.loads(path.read_text())


# -- simulate ---------------------------------------------------------------

def test_simulate_happy_path(tmp_path):
    cfg = write_json(tmp_path / "sim.json", SMALL_SIM)
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg), "--out", str(out), "--per-seeker", "--quiet"]) == 0
    with open(out / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["n"]) for r in rows] == [2, 3, 5]
    assert set(rows[0]) == {
        "n", "rev_gfp", "rev_vcg", "rel_gfp", "rel_vcg",
        "se_rev_gfp", "se_rev_vcg", "se_rel_gfp", "se_rel_vcg",
    }
    with open(out / "per_seeker.csv") as fh:
        per = list(csv.DictReader(fh))
    assert len(per) == 60 * 3 * 2
    assert list(per[0]) == ["seeker_id", "n", "mechanism", "revenue", "relevance"]
    manifest = read_json(out / "manifest.json")
    assert manifest["seed"] == 17 and manifest["config"]["seeker_count"] == 60


def test_simulate_rerun_is_byte_identical(tmp_path):
    cfg = write_json(tmp_path / "sim.json", SMALL_SIM)
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a"), "--quiet"])
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "b"), "--quiet", "--workers", "2"])
    assert (tmp_path / "a" / "summary.csv").read_bytes() == (tmp_path / "b" / "summary.csv").read_bytes()


def test_simulate_seed_override(tmp_path):
    cfg = write_json(tmp_path / "sim.json", SMALL_SIM)
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a"), "--quiet"])
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "18", "--quiet"])
    assert read_json(tmp_path / "b" / "manifest.json")["seed"] == 18
    assert (tmp_path / "a" / "summary.csv").read_bytes() != (tmp_path / "b" / "summary.csv").read_bytes()


def test_simulate_malformed_json(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text("{not json")
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 2
    assert not out.exists() or not any(out.iterdir())
    assert "error" in capsys.readouterr().err


def test_simulate_bad_config_values(tmp_path):
    cfg = write_json(tmp_path / "sim.json", {**SMALL_SIM, "seeker_count": 0})
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_missing_config(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.json")]) == 2


def test_usage_error():
    assert main(["frobnicate"]) == 2


# -- allocate ---------------------------------------------------------------

def test_allocate_example_1(fixtures_dir, tmp_path):
    for name in ("example1_scores.json", "example1_instance.json"):
        out = tmp_path / name
        assert main(["allocate", "--config", str(fixtures_dir / name), "--out", str(out), "--quiet"]) == 0
        res = read_json(out / "allocation.json")
        assert res["mechanisms"]["vcg"]["total_score"] == pytest.approx(3.0, abs=1e-12)


def test_allocate_single_job(tmp_path):
    cfg = write_json(tmp_path / "one.json", {"bids": [2.0], "pctr": [[0.3]], "erelevance": [[0.4]], "seeker_weight": 1.0})
    assert main(["allocate", "--config", str(cfg), "--out", str(tmp_path), "--quiet"]) == 0
    res = read_json(tmp_path / "allocation.json")
    assert res["mechanisms"]["gfp"] == res["mechanisms"]["vcg"]


def test_allocate_random_5x5_dominance(tmp_path):
    rng = np.random.default_rng(55)
    inst = {
        "bids": rng.lognormal(0, 0.5, 5).tolist(),
        "pctr": rng.random((5, 5)).tolist(),
        "erelevance": rng.random((5, 5)).tolist(),
        "seeker_weight": 1.2,
    }
    cfg = write_json(tmp_path / "r.json", inst)
    assert main(["allocate", "--config", str(cfg), "--out", str(tmp_path), "--quiet"]) == 0
    res = read_json(tmp_path / "allocation.json")["mechanisms"]
    assert res["vcg"]["total_score"] >= res["gfp"]["total_score"]


def test_allocate_non_square(tmp_path, capsys):
    cfg = write_json(tmp_path / "bad.json", {"bids": [1.0, 1.0], "pctr": [[0.1, 0.2, 0.3], [0.1, 0.2, 0.3]],
                                            "erelevance": [[0, 0], [0, 0]]})
    assert main(["allocate", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "shape" in capsys.readouterr().err
    assert not (tmp_path / "allocation.json").exists()


def test_allocate_prints(fixtures_dir, capsys):
    assert main(["allocate", "--config", str(fixtures_dir / "example1_scores.json")]) == 0
    assert json.loads(capsys.readouterr().out)["mechanisms"]["vcg"]["assignment"] == [0, 1]


# -- calibrate ----------------------------------------------------------------

def test_calibrate_noiseless(tmp_path):
    obs = tmp_path / "obs.csv"
    write_observations_csv(obs, synthetic_observations(0.5, {"a": 1.0, "b": 3.0}, [0.5, 1.0, 2.0]))
    targets = tmp_path / "targets.csv"
    targets.write_text("segment_id,target_relevance\na,2.0\nb,3.0\n")
    out = tmp_path / "out"
    assert main(["calibrate", "--config", str(obs), "--targets", str(targets), "--out", str(out)]) == 0
    fit = read_json(out / "fit.json")
    assert abs(fit["alpha"] - 0.5) <= 1e-9
    with open(out / "required_weights.csv") as fh:
        weights = {r["segment_id"]: float(r["required_weight"]) for r in csv.DictReader(fh)}
    assert weights["a"] == pytest.approx(4.0) and weights["b"] == pytest.approx(1.0)
    assert (out / "dispersion_report.csv").exists()


def test_calibrate_json_config(tmp_path):
    write_observations_csv(tmp_path / "obs.csv", synthetic_observations(0.3, {"a": 1.0}, [1.0, 2.0]))
    cfg = write_json(tmp_path / "cal.json", {"observations": "obs.csv", "per_segment": True})
    assert main(["calibrate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert read_json(tmp_path / "o" / "fit.json")["segment_alpha"]["a"] == pytest.approx(0.3)


def test_calibrate_constant(tmp_path):
    obs = tmp_path / "obs.csv"
    obs.write_text("segment_id,seeker_weight,relevance\na,1,2\na,2,2\na,4,2\n")
    assert main(["calibrate", "--config", str(obs), "--out", str(tmp_path / "o"), "--quiet"]) == 0
    assert read_json(tmp_path / "o" / "fit.json")["alpha"] == pytest.approx(0.0, abs=1e-15)


def test_calibrate_single_weight(tmp_path, capsys):
    obs = tmp_path / "obs.csv"
    obs.write_text("segment_id,seeker_weight,relevance\na,1,2\na,1,3\nb,1,4\n")
    out = tmp_path / "o"
    assert main(["calibrate", "--config", str(obs), "--out", str(out)]) == 3
    assert "unidentifiable" in capsys.readouterr().err
    assert not (out / "fit.json").exists()


# -- optimize-weights -----------------------------------------------------------

def test_optimize_geometric(fixtures_dir, tmp_path):
    assert main(["optimize-weights", "--config", str(fixtures_dir / "geometric_mdp.json"), "--out", str(tmp_path)]) == 0
    res = read_json(tmp_path / "policy.json")
    assert abs(res["values"][0] - 2.0) <= 1e-8
    assert res["iterations"] > 0 and "residual" in res


def test_optimize_tiny_golden(fixtures_dir, tmp_path):
    assert main(["optimize-weights", "--config", str(fixtures_dir / "tiny_mdp.json"), "--out", str(tmp_path)]) == 0
    res = read_json(tmp_path / "policy.json")
    golden = read_json(fixtures_dir / "tiny_mdp_golden.json")
    assert res["policy"] == golden["policy"]
    np.testing.assert_allclose(res["values"], golden["values"], atol=1e-9)
    assert res["policy_weights"] == [0.5, 1.5, 1.5]


def test_optimize_discount_one(tmp_path):
    cfg = write_json(tmp_path / "m.json", {"model": {"discount": 1.0, "gain": [[1.0]], "kernel": [[[1.0]]]}})
    assert main(["optimize-weights", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert not (tmp_path / "policy.json").exists()


def test_optimize_non_convergence(tmp_path, capsys):
    cfg = write_json(tmp_path / "m.json", {"max_iters": 3,
                                           "model": {"discount": 0.99, "gain": [[1.0]], "kernel": [[[1.0]]]}})
    assert main(["optimize-weights", "--config", str(cfg), "--out", str(tmp_path)]) == 3
    assert "residual" in capsys.readouterr().err


def test_optimize_from_episodes(tmp_path):
    (tmp_path / "ep.csv").write_text("state,action,next_state\n0,0,1\n0,1,0\n1,0,0\n1,1,1\n")
    cfg = write_json(tmp_path / "m.json", {"discount": 0.5, "gain": [[0.0, 1.0], [2.0, 0.0]],
                                           "episodes": "ep.csv", "actions": [0.5, 1.0]})
    assert main(["optimize-weights", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    res = read_json(tmp_path / "policy.json")
    assert len(res["policy"]) == 2
