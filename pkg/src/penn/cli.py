"""Command-line entry point: ``penn simulate|run|reproduce|certify``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .algebra import (
    PartitionError,
    PatternPartition,
    separate_by_coordinates,
    separate_by_halfspaces,
    verify_certificate,
)
from .datagen import SimModel, sample
from .experiment import per_seed_csv, preset_config, run_experiment
from .io import (
    ConfigError,
    ExperimentConfig,
    dataset_to_csv,
    load_config,
    write_json,
    write_manifest,
)

log = logging.getLogger("penn")


class UsageError(Exception):
    pass


def _config(args, **defaults) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = ExperimentConfig.from_dict(defaults) if defaults else ExperimentConfig().validate()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _out_dir(args, cfg) -> Path:
    out = Path(args.out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> dict:
    cfg = _config(args)
    if args.model:
        cfg.model = args.model
    if args.d is not None:
        cfg.d = args.d
    if args.n is not None:
        cfg.n = args.n
    cfg.validate()
    if cfg.dataset is not None:
        raise ConfigError("simulate needs a model, not a dataset", "dataset")
    model = SimModel(cfg.model, cfg.d, cfg.observe_prob)
    X, omega, y = sample(model, cfg.n, np.random.default_rng(cfg.seed))
    out = _out_dir(args, cfg)
    data = out / "dataset.csv"
    data.write_text(dataset_to_csv(X, omega, y))
    manifest = write_manifest(out, [data], command="simulate", model=cfg.model, d=cfg.d,
                              n=cfg.n, seed=cfg.seed, observe_prob=cfg.observe_prob)
    return {"dataset": str(data), "manifest": str(manifest)}


def _emit_results(out: Path, doc: dict, predictions, title: str = "") -> list:
    from .plotting import comparison_boxplot, fitted_curves

    files = [write_json(out / "results.json", doc)]
    per_seed = out / "per_seed.csv"
    per_seed.write_text(per_seed_csv(doc))
    files.append(per_seed)
    if doc["comparisons"]:
        metric = next(iter(doc["comparisons"].values()))["metric"]
        files.append(comparison_boxplot(doc["comparisons"], out / "comparison.svg",
                                        metric.replace("_", " "), title))
        table = out / "comparison.csv"
        lines = ["imputer,estimator,min,q1,median,q3,max,penn_wins,nn_wins"]
        for kind, s in doc["comparisons"].items():
            for est in ("penn", "nn"):
                q = s[est]
                lines.append(",".join([kind, est.upper()] + [repr(q[k]) for k in ("min", "q1", "median", "q3", "max")]
                                      + [str(s["penn_wins"]), str(s["nn_wins"])]))
        table.write_text("\n".join(lines) + "\n")
        files.append(table)
    if predictions:
        kind, pr = next(iter(predictions.items()))
        preds = {e: pr[e] for e in ("NN", "PENN") if e in pr}
        fit_csv = out / "fitted.csv"
        cols = ["z_1", "omega_1", "y", "f_star"] + [f"pred_{e}" for e in preds]
        rows = [",".join(cols)]
        f_star = pr["f_star"]
        for i in range(len(pr["y"])):
            vals = [pr["z"][i, 0], pr["omega"][i, 0], pr["y"][i],
                    np.nan if f_star is None else f_star[i]]
            vals += [np.asarray(preds[e]).reshape(-1)[i] for e in preds]
            rows.append(",".join(repr(float(v)) for v in vals))
        fit_csv.write_text("\n".join(rows) + "\n")
        files.append(fit_csv)
        files.append(fitted_curves(pr["z"], pr["omega"], pr["y"], f_star, preds, out / "fitted.svg"))
    return files


def cmd_run(args) -> dict:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    doc, _ = run_experiment(cfg)
    files = _emit_results(out, doc, None)
    write_manifest(out, files, command="run", seed=cfg.seed)
    return {"out": str(out), "failures": len(doc["failures"]), "comparisons": doc["comparisons"]}


def cmd_reproduce(args) -> dict:
    overrides = {}
    if args.repetitions is not None:
        overrides["repetitions"] = args.repetitions
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.config:
        extra = json.loads(Path(args.config).read_text())
        if not isinstance(extra, dict):
            raise ConfigError("config must be a JSON object")
        overrides = {**extra, **overrides}
    try:
        cfg = preset_config(args.preset, args.scale, **overrides)
    except ConfigError:
        raise
    except ValueError as err:
        raise ConfigError(str(err), "scale") from None
    out = Path(args.out or f"{cfg.out}/{args.preset}")
    out.mkdir(parents=True, exist_ok=True)
    doc, predictions = run_experiment(cfg, keep_predictions=args.preset == "example1")
    doc["metadata"]["preset"] = args.preset
    doc["metadata"]["scale"] = args.scale
    files = _emit_results(out, doc, predictions, title=args.preset)
    write_manifest(out, files, command="reproduce", preset=args.preset, scale=args.scale, seed=cfg.seed)
    return {"out": str(out), "failures": len(doc["failures"]), "comparisons": doc["comparisons"]}


def certify(doc: dict) -> dict:
    """Build and verify a separation certificate from a partition document.

    ``structure`` selects ``"coordinates"`` (with optional 0-based
    ``coordinates``, default all) or ``"halfspaces"`` (``halfspaces[k]`` a
    list of ``{"v": [...], "b": ...}``).
    """
    partition = PatternPartition.from_dict(doc)
    structure = doc.get("structure", "coordinates")
    if structure == "coordinates":
        coords = doc.get("coordinates", list(range(partition.d)))
        cert = separate_by_coordinates(partition, coords)
    elif structure == "halfspaces":
        hs = [[(h["v"], h["b"]) for h in cell] for cell in doc["halfspaces"]]
        cert = separate_by_halfspaces(partition, hs)
    else:
        raise PartitionError(f"unknown structure {structure!r}")
    verdict = verify_certificate(cert, partition)
    result = cert.to_dict()
    result.update(verdict="pass" if verdict else "fail", max_cell_deviation=verdict.max_cell_deviation,
                  min_anchor_gap=verdict.min_anchor_gap if np.isfinite(verdict.min_anchor_gap) else None,
                  failures=verdict.failures, K=partition.K, d=partition.d)
    return result


def cmd_certify(args) -> dict:
    src = args.partition or args.config
    if not src:
        raise UsageError("certify needs a partition file")
    doc = json.loads(Path(src).read_text())
    out = Path(args.out or "certificate.json")
    if out.suffix != ".json":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "certificate.json"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    try:
        result = certify(doc)
    except PartitionError as err:
        write_json(out, {"type": "separation_certificate", "verdict": "fail", "error": str(err),
                         "patterns": [list(p) for p in err.patterns]})
        raise
    write_json(out, result)
    if result["verdict"] != "pass":
        raise PartitionError("; ".join(result["failures"]))
    return {"certificate": str(out), "verdict": result["verdict"], "margin": result["margin"]}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="penn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="base seed (overrides config)")
        p.add_argument("--out", help="output directory (or file for certify)")
        return p

    p = common(sub.add_parser("simulate", help="write a simulated dataset"))
    p.add_argument("--model", help="example1 or model1..model4")
    p.add_argument("--d", type=int)
    p.add_argument("--n", type=int)
    p.set_defaults(func=cmd_simulate)

    p = common(sub.add_parser("run", help="train and evaluate per config"))
    p.set_defaults(func=cmd_run)

    p = common(sub.add_parser("reproduce", help="run a named preset"))
    p.add_argument("preset", choices=["example1", "model1", "model2", "model3", "model4"])
    p.add_argument("--scale", type=float, default=None, help="sample-size factor in (0, 1]")
    p.add_argument("--repetitions", type=int)
    p.set_defaults(func=cmd_reproduce)

    p = common(sub.add_parser("certify", help="build a separation certificate"))
    p.add_argument("partition", nargs="?", help="partition JSON file")
    p.set_defaults(func=cmd_certify)
    return parser


def _error(kind: str, err: Exception, code: int, **extra) -> int:
    doc = {"error": kind, "message": str(err), **extra}
    print(json.dumps(doc), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = args.func(args)
    except ConfigError as err:
        return _error("config", err, 2, field=err.field)
    except PartitionError as err:
        return _error("partition", err, 1, patterns=[list(p) for p in err.patterns])
    except (UsageError, FileNotFoundError, json.JSONDecodeError) as err:
        return _error("usage", err, 2)
    except OSError as err:
        return _error("io", err, 1)
    print(json.dumps(result, indent=2, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())
