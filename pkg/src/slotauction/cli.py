"""Command-line entry point.

Exit codes: 0 success, 2 usage or configuration error, 3 runtime failure.
Outputs are written to a temporary file and renamed into place, so a failed
command leaves no partial primary output behind.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
import warnings
from pathlib import Path

from . import allocation, calibration, core, mdp, metrics, simulation

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("slotauction")


class UsageError(Exception):
    pass


class RuntimeFailure(Exception):
    pass


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _commit(outputs: dict[Path, str]) -> None:
    """Write all staged outputs; nothing is written until every one is ready."""
    for path, text in outputs.items():
        _atomic_write(path, text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"cannot parse {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"{path} must contain a JSON object")
    return data


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


# --------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    raw = _load_json(args.config)
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        config = simulation.SimulationConfig.from_dict(raw)
    except simulation.ConfigError as exc:
        raise UsageError(f"invalid simulation config: {exc}") from None
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    try:
        report = simulation.run_sweep(config, keep_rows=args.per_seeker, workers=args.workers)
    except simulation.ConfigError as exc:
        raise UsageError(str(exc)) from None
    except Exception as exc:
        raise RuntimeFailure(f"simulation failed: {exc}") from exc

    out = Path(args.out or ".")
    staged = {out / "summary.csv": simulation.summary_csv(report)}
    if args.per_seeker:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=metrics.PER_SEEKER_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(simulation.per_seeker_rows(report))
        staged[out / "per_seeker.csv"] = buf.getvalue()
    manifest = {
        "command": "simulate",
        "seed": config.seed,
        "config": config.to_dict(),
        "outputs": sorted(p.name for p in staged),
        "strict_dominance": {str(n): c for n, c in report.strict_dominance.items()},
    }
    staged[out / "manifest.json"] = _json(manifest)
    _commit(staged)
    log.info("wrote %s", ", ".join(str(p) for p in staged))
    return EXIT_OK


def _instance_from_dict(d) -> tuple:
    """Return (instance or None, scores, combiner name)."""
    combiner = d.get("combiner", "additive")
    try:
        if "scores" in d:
            return None, core.as_score_matrix(d["scores"]), combiner
        inst = core.QueryInstance(
            d["bids"], d["pctr"], d["erelevance"], d.get("seeker_weight", 0.0), d.get("seeker_id")
        )
        return inst, core.score_position_aware(inst, combiner), combiner
    except KeyError as exc:
        raise UsageError(f"instance is missing {exc.args[0]!r}") from None
    except (core.InvalidInstanceError, ValueError) as exc:
        raise UsageError(f"invalid instance: {exc}") from None


def cmd_allocate(args) -> int:
    raw = _load_json(args.config)
    inst, scores, combiner = _instance_from_dict(raw)
    view_bar = scores.mean(axis=1)
    gfp = allocation.gfp_rank(view_bar)
    vcg = allocation.match_optimal(scores)
    result = {"schema_version": 1, "n": int(scores.shape[0]), "combiner": combiner, "mechanisms": {}}
    for name, m in (("gfp", gfp), ("vcg", vcg.matching)):
        entry = {
            "assignment": m.assignment.tolist(),
            "slot_order": m.inverse.tolist(),
            "total_score": allocation.total_score(scores, m),
        }
        if inst is not None:
            entry["revenue"] = metrics.revenue(inst, m, raw.get("event", "click"))
            entry["relevance"] = metrics.relevance(inst, m)
        result["mechanisms"][name] = entry
    text = _json(result)
    if args.out:
        _commit({Path(args.out) / "allocation.json": text})
    if not args.quiet:
        sys.stdout.write(text)
    return EXIT_OK


def _load_observations(path):
    try:
        return calibration.read_observations_csv(path)
    except FileNotFoundError:
        raise UsageError(f"observations file not found: {path}") from None
    except (ValueError, KeyError) as exc:
        raise UsageError(f"cannot read observations {path}: {exc}") from None


def cmd_calibrate(args) -> int:
    config_path = Path(args.config)
    per_segment = False
    if config_path.suffix.lower() == ".json":
        raw = _load_json(config_path)
        if "observations" not in raw:
            raise UsageError("calibration config needs an 'observations' CSV path")
        obs_path = (config_path.parent / raw["observations"]).resolve()
        per_segment = bool(raw.get("per_segment", False))
        targets_path = args.targets or (
            str((config_path.parent / raw["targets"]).resolve()) if raw.get("targets") else None
        )
    else:
        obs_path, targets_path = config_path, args.targets
    observations = _load_observations(obs_path)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", calibration.ModelDomainWarning)
            fit = calibration.fit_power_law(observations, per_segment=per_segment)
        for w in caught:
            log.warning("%s", w.message)
    except calibration.UnidentifiableError as exc:
        raise RuntimeFailure(str(exc)) from None

    out = Path(args.out or ".")
    staged = {out / "fit.json": _json(fit.to_dict())}
    if targets_path:
        targets = {}
        try:
            with open(targets_path, newline="") as fh:
                for row in csv.DictReader(fh):
                    targets[row["segment_id"]] = float(row["target_relevance"])
        except FileNotFoundError:
            raise UsageError(f"targets file not found: {targets_path}") from None
        except (KeyError, ValueError) as exc:
            raise UsageError(f"targets CSV needs segment_id,target_relevance columns: {exc}") from None
        try:
            weights = {g: calibration.required_weight(fit, g, t) for g, t in targets.items()}
        except (calibration.DomainError, KeyError) as exc:
            raise RuntimeFailure(f"cannot invert fit: {exc}") from None
        staged[out / "required_weights.csv"] = _csv_text(
            ["segment_id", "target_relevance", "required_weight"],
            [[g, repr(targets[g]), repr(w)] for g, w in weights.items()],
        )
        covered = [o for o in observations if o.segment_id in weights]
        if covered:
            report = calibration.dispersion_report(
                [o.relevance for o in covered],
                calibration.reweighted_relevance(fit, covered, weights),
            )
            rows = list(report.rows())
            staged[out / "dispersion_report.csv"] = _csv_text(
                list(rows[0]), [[r[k] if k == "population" else repr(float(r[k])) for k in r] for r in rows]
            )
    _commit(staged)
    return EXIT_OK


def cmd_optimize_weights(args) -> int:
    raw = _load_json(args.config)
    config_dir = Path(args.config).parent
    tolerance = float(raw.get("tolerance", 1e-8))
    max_iters = int(raw.get("max_iters", 100_000))
    if not tolerance > 0:
        raise UsageError("tolerance must be positive")
    discount = raw.get("discount", raw.get("model", {}).get("discount"))
    if discount is None:
        raise UsageError("config needs a discount")
    if not 0 <= float(discount) < 1:
        raise UsageError(f"discount must lie in [0, 1), got {discount}")
    try:
        if "model" in raw:
            model = mdp.MdpModel.from_dict(raw["model"])
            result = mdp.value_iteration(model, tolerance, max_iters)
        else:
            if "episodes" not in raw or "gain" not in raw:
                raise UsageError("config needs either 'model' or both 'gain' and 'episodes'")
            episodes = mdp.read_episodes_csv(config_dir / raw["episodes"])
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", mdp.UnvisitedPairsWarning)
                model, result = mdp.learn_and_plan(
                    episodes, raw["gain"], float(discount), float(raw.get("smoothing", 0.0)),
                    tolerance, max_iters, raw.get("actions"),
                )
            for w in caught:
                log.warning("%s", w.message)
    except mdp.ModelError as exc:
        raise UsageError(f"invalid model: {exc}") from None
    except FileNotFoundError as exc:
        raise UsageError(f"file not found: {exc.filename}") from None
    except (IndexError, ValueError) as exc:
        raise UsageError(f"invalid input: {exc}") from None
    except mdp.NonConvergenceError as exc:
        raise RuntimeFailure(str(exc)) from None
    _commit({Path(args.out or ".") / "policy.json": _json(mdp.result_to_dict(model, result, tolerance))})
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slotauction", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="input file (JSON, or CSV for calibrate)")
    common.add_argument("--out", default=None, help="output directory (default: current directory)")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--quiet", action="store_true")
    verbosity.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="GFP vs matching sweep over auction depth")
    p.add_argument("--per-seeker", action="store_true", help="also write per_seeker.csv")
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("allocate", parents=[common], help="allocate one instance with both mechanisms")
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("calibrate", parents=[common], help="fit relevance = z_g * w^alpha")
    p.add_argument("--targets", default=None, help="CSV of segment_id,target_relevance")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("optimize-weights", parents=[common], help="solve the Seeker-Weight MDP")
    p.set_defaults(func=cmd_optimize_weights)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    level = logging.WARNING
    if args.verbose:
        level = logging.INFO
    elif args.quiet:
        level = logging.ERROR
    logging.basicConfig(level=level, format="%(levelname)s: %(message)s", stream=sys.stderr)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
