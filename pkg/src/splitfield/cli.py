"""Command-line runner: ``splitfield run|schema|selftest``.

A run reads one JSON config, executes the named experiment, and writes a
JSON report and a CSV table.  Exit status is 0 when every verdict passes,
1 when any verdict fails, and 2 for invalid configs or runtime errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np
from scipy import stats

from . import bounds, cgf, fields, mdp
from . import rng as rngmod
from .errors import SplitFieldError
from .measure import Box, TestFunction, integrate_box, variation_box

VERDICT_LEVEL = 0.999

EXPERIMENTS = ("sample", "cgf", "theorem1", "tail", "clt", "bounds", "verify-split",
               "properties")

_vec = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_box = {
    "type": "object",
    "required": ["lower", "upper"],
    "properties": {"lower": _vec, "upper": _vec},
    "additionalProperties": False,
}
_pieces = {
    "type": "array",
    "minItems": 1,
    "items": {
        "type": "object",
        "required": ["lower", "upper", "value"],
        "properties": {"lower": _vec, "upper": _vec, "value": {"type": "number"}},
        "additionalProperties": False,
    },
}
_scale = {"oneOf": [{"type": "number", "exclusiveMinimum": 0},
                    {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                     "minItems": 1}]}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "splitfield experiment config",
    "type": "object",
    "required": ["experiment", "seed", "model"],
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "n": {"type": "integer", "minimum": 1},
        "model": {
            "type": "object",
            "required": ["name"],
            "properties": {
                "name": {"enum": ["poisson", "shot_noise", "block_iid"]},
                "dim": {"type": "integer", "minimum": 1},
                "intensity": {"type": "number", "exclusiveMinimum": 0},
                "mass": {"type": "number"},
                "amplitude": {"type": "number"},
                "kernel": {"type": "object", "required": ["pieces"],
                           "properties": {"pieces": _pieces}},
            },
            "additionalProperties": False,
        },
        "phi": {
            "type": "object",
            "oneOf": [
                {"required": ["pieces"]},
                {"required": ["target", "eps"]},
            ],
            "properties": {
                "pieces": _pieces,
                "target": {
                    "type": "object",
                    "required": ["kind"],
                    "properties": {
                        "kind": {"enum": ["tent", "cosine_bump", "piecewise_linear"]},
                        "center": {"oneOf": [{"type": "number"}, _vec]},
                        "half_width": {"type": "number", "exclusiveMinimum": 0},
                        "height": {"type": "number"},
                        "knots": _vec,
                        "heights": _vec,
                    },
                },
                "eps": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "r": _scale,
        "lambdas": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "schedule": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "object", "required": ["r", "lambda"],
                      "properties": {"r": _scale, "lambda": {"type": "number"}}},
        },
        "mode": {"enum": ["analytic", "mc"]},
        "tolerance": {"type": "number", "exclusiveMinimum": 0},
        "c": {"type": "number", "exclusiveMinimum": 0},
        "scales": {"type": "array", "items": _scale, "minItems": 1},
        "method": {"enum": ["exact", "tilted", "plain"]},
        "check": {"enum": ["limit", "exact"]},
        "window": _box,
        "axis": {"type": "integer", "minimum": 0},
        "offset": {"type": "number"},
        "shapes": {"type": "array", "items": _vec, "minItems": 1},
        "bounds": {
            "type": "object",
            "properties": {
                "family": {"enum": ["model", "quadratic"]},
                "coef": {"type": "number", "minimum": 0},
                "C_prev": {"type": "number", "exclusiveMinimum": 0},
                "k_min": {"type": "integer", "minimum": 0},
                "k_max": {"type": "integer", "minimum": 0},
                "n_max": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "outputs": {
            "type": "object",
            "properties": {"json": {"type": "string"}, "csv": {"type": "string"}},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
    "allOf": [
        {"if": {"properties": {"experiment": {"const": "theorem1"}}},
         "then": {"required": ["phi", "schedule"]}},
        {"if": {"properties": {"experiment": {"const": "cgf"}}},
         "then": {"required": ["phi", "r", "lambdas"]}},
        {"if": {"properties": {"experiment": {"const": "tail"}}},
         "then": {"required": ["phi", "scales", "c"]}},
        {"if": {"properties": {"experiment": {"const": "clt"}}},
         "then": {"required": ["phi", "r"]}},
        {"if": {"properties": {"experiment": {"const": "sample"}}},
         "then": {"required": ["window"]}},
        {"if": {"properties": {"experiment": {"const": "verify-split"}}},
         "then": {"required": ["window"]}},
        {"if": {"properties": {"experiment": {"const": "properties"}}},
         "then": {"required": ["shapes", "lambdas"]}},
    ],
}


class ConfigError(SplitFieldError):
    pass


# config decoding --------------------------------------------------------------

def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path)


def validate(config) -> None:
    """Raise ConfigError naming the JSON pointer of the first problem."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(config), key=lambda e: (list(e.path), e.message))
    if errors:
        e = errors[0]
        raise ConfigError(f"config{_pointer(e.path)}: {e.message}")
    dim = config["model"].get("dim", 1)
    if "schedule" in config:
        try:
            _schedule(config, dim)
        except SplitFieldError as exc:
            raise ConfigError(f"config/schedule: {exc}") from None


def _pieces_to_phi(pieces) -> TestFunction:
    lo = np.array([p["lower"] for p in pieces], float)
    hi = np.array([p["upper"] for p in pieces], float)
    vals = np.array([p["value"] for p in pieces], float)
    return TestFunction.from_arrays(lo, hi, vals)


def build_model(spec: dict) -> fields.FieldModel:
    dim = spec.get("dim", 1)
    name = spec["name"]
    if name == "poisson":
        return fields.CenteredPoisson(dim, spec.get("intensity", 1.0), spec.get("mass", 1.0))
    if name == "shot_noise":
        kernel = _pieces_to_phi(spec["kernel"]["pieces"]) if "kernel" in spec else None
        return fields.ShotNoise(dim, spec.get("intensity", 1.0), spec.get("mass", 1.0), kernel)
    return fields.BlockIID(dim, spec.get("amplitude", 1.0))


def build_phi(spec: dict) -> TestFunction:
    if "pieces" in spec:
        return _pieces_to_phi(spec["pieces"])
    t = spec["target"]
    kind = t["kind"]
    if kind == "tent":
        target = mdp.Tent(float(t.get("center", 1.0)), t.get("half_width", 1.0),
                          t.get("height", 1.0))
    elif kind == "cosine_bump":
        target = mdp.CosineBump(tuple(np.atleast_1d(t.get("center", 0.0))),
                                t.get("half_width", 1.0))
    else:
        target = mdp.PiecewiseLinear(tuple(t["knots"]), tuple(t["heights"]))
    return mdp.step_approximate(target, spec["eps"])


def _box(spec) -> Box:
    return Box(spec["lower"], spec["upper"])


def _schedule(config, dim) -> mdp.ScanSchedule:
    return mdp.ScanSchedule(tuple((p["r"], p["lambda"]) for p in config["schedule"]), dim)


# experiments ------------------------------------------------------------------
# each returns (report dict, csv header, csv rows)

def _exp_sample(cfg, model, phi, threads):
    window = _box(cfg["window"])
    m = fields.sample(model, window, cfg["seed"])
    total = integrate_box(m, window)
    var = variation_box(m, window)
    rows = [["atom", *p, *p, w] for p, w in zip(m.points.tolist(), m.weights.tolist())]
    rows += [["cell", *a, *b, v] for a, b, v in
             zip(m.cell_lo.tolist(), m.cell_hi.tolist(), m.densities.tolist())]
    ok = abs(total) <= var + 1e-12 * max(1.0, var)
    report = {"experiment": "sample", "model": model.describe(),
              "points": [{"n_atoms": m.n_atoms, "n_cells": m.n_cells, "integral": total,
                          "variation": var, "verdict": mdp._verdict(ok)}],
              "overall": mdp._verdict(ok)}
    d = model.dim
    header = ["kind", *[f"lower{i}" for i in range(d)], *[f"upper{i}" for i in range(d)],
              "value"]
    return report, header, rows


def _exp_cgf(cfg, model, phi, threads):
    n = cfg.get("n", 100_000)
    est = cgf.mc_cgf(model, phi, cfg["r"], cfg["lambdas"], n, cfg["seed"], threads=threads)
    exact = cgf.analytic_cgf(model, phi, cfg["r"], np.array([e.lam for e in est]))
    # the reported ci is the 95% bootstrap interval; verdicts use a normal band
    # that holds simultaneously over all points at family level VERDICT_LEVEL
    m = max(1, sum(e.lam != 0.0 for e in est))
    z = float(stats.norm.ppf(1.0 - (1.0 - VERDICT_LEVEL) / (2.0 * m)))
    points = []
    rows = []
    for e, a in zip(est, np.atleast_1d(exact)):
        covered = abs(e.value - a) <= z * e.se
        points.append({"lambda": e.lam, "value": e.value, "ci": [e.ci_low, e.ci_high],
                       "se": e.se, "band": z * e.se, "n": e.n, "ess": e.ess, "flag": e.flag,
                       "analytic": float(a), "verdict": mdp._verdict(covered and e.flag == "ok")})
        rows.append(e.row() + [float(a)])
    ok = all(p["verdict"] == "pass" for p in points)
    report = {"experiment": "cgf", "model": model.describe(), "phi": phi.to_dict(),
              "points": points, "verdict_level": VERDICT_LEVEL, "overall": mdp._verdict(ok)}
    return report, cgf.CSV_COLUMNS + ["analytic"], rows


def _r_cols(r, d):
    rr = np.broadcast_to(np.asarray(r, float), (d,))
    return [float(x) for x in rr]


def _exp_theorem1(cfg, model, phi, threads):
    rep = mdp.theorem1_scan(model, phi, _schedule(cfg, model.dim), cfg.get("mode", "analytic"),
                            cfg.get("n", 100_000), cfg["seed"], cfg.get("tolerance", 0.02),
                            threads)
    d = model.dim
    rows = [[*_r_cols(p["r"], d), p["lambda"], p["ratio"], *p["ci"], p["deviation"]]
            for p in rep.points]
    header = [f"r{i}" for i in range(d)] + ["lambda", "ratio", "ci_low", "ci_high",
                                            "deviation"]
    return rep.to_dict(), header, rows


def _exp_tail(cfg, model, phi, threads):
    rep = mdp.tail_scan(model, phi, cfg["scales"], cfg["c"], cfg.get("method", "exact"),
                        cfg.get("n", 100_000), cfg["seed"], cfg.get("tolerance", 0.05), threads,
                        cfg.get("check", "limit"))
    d = model.dim
    rows = [[*_r_cols(p["r"], d), p["c"], p["value"], *p["ci"], p["method"],
             p["events"] if p["events"] is not None else "", p["flag"]] for p in rep.points]
    header = [f"r{i}" for i in range(d)] + ["c", "value", "ci_low", "ci_high", "method",
                                            "events", "flag"]
    return rep.to_dict(), header, rows


def _exp_clt(cfg, model, phi, threads):
    rep = mdp.clt_check(model, phi, cfg["r"], cfg.get("n", 100_000), cfg["seed"],
                        threads=threads)
    d = model.dim
    rows = [[*_r_cols(p["r"], d), p["ks"], p["sampling_threshold"], p["cap"], p["n"]]
            for p in rep.points]
    header = [f"r{i}" for i in range(d)] + ["ks", "sampling_threshold", "cap", "n"]
    return rep.to_dict(), header, rows


def _exp_bounds(cfg, model, phi, threads):
    b = cfg.get("bounds", {})
    d = model.dim
    budget = bounds.SearchBudget(k_min=b.get("k_min", 1), k_max=b.get("k_max", 8),
                                 n_max=b.get("n_max", 6))
    c_prev = b.get("C_prev", 1.0)
    if b.get("family", "model") == "model":
        def family(shape, grid):
            return bounds.model_table(model, shape, grid)
    else:
        coef = b.get("coef", 1.0)

        def family(shape, grid):
            return bounds.quadratic_table(shape, coef, grid)
    rep = bounds.derive_Cd(family, c_prev, d, budget)
    unit = bounds.model_table(model, (1.0,) * d, bounds.symmetric_grid(1.0, 400, 2 ** (1 / 64)))
    eps = bounds.epsilon_from_quarter_bound(unit)
    verdicts = [rep.holds, eps.holds]
    report = {"experiment": "bounds", "model": model.describe(),
              "points": [dict(rep.to_dict(), verdict=mdp._verdict(rep.holds)),
                         dict(eps.to_dict(), verdict=mdp._verdict(eps.holds))],
              "overall": mdp._verdict(all(verdicts))}
    rows = [[r["condition"], r["holds"], r["margin"]] for r in report["points"]]
    return report, ["condition", "holds", "margin"], rows


def _exp_verify_split(cfg, model, phi, threads):
    window = _box(cfg["window"])
    axis = cfg.get("axis", 0)
    offset = cfg.get("offset", 0.5 * (window.lower[axis] + window.upper[axis]))
    rep = fields.verify_split_statistics(model, window, axis, offset, cfg.get("n", 1000),
                                         cfg["seed"])
    body = rep.to_dict()
    body["verdict"] = mdp._verdict(rep.passed)
    report = {"experiment": "verify-split", "model": model.describe(), "points": [body],
              "overall": mdp._verdict(rep.passed)}
    rows = [[k, v, rep.ks_threshold] for k, v in sorted(rep.ks.items())]
    return report, ["probe", "ks", "threshold"], rows


def _exp_properties(cfg, model, phi, threads):
    res = cgf.model_f_properties(model, cfg["shapes"], cfg["lambdas"])
    res["verdict"] = mdp._verdict(res["holds"])
    report = {"experiment": "properties", "model": model.describe(), "points": [res],
              "overall": mdp._verdict(res["holds"])}
    rows = [[k, res[k]["holds"], res[k]["max_violation"], res[k]["n_checks"]]
            for k in ("monotone", "subadditive")]
    rows += [[f"small_lambda {s}", v["settles"] and v["eps"] > 0, v["limit"], v["eps"]]
             for s, v in sorted(res["small_lambda"].items())]
    return report, ["property", "holds", "value", "extra"], rows


RUNNERS: dict[str, Callable] = {
    "sample": _exp_sample,
    "cgf": _exp_cgf,
    "theorem1": _exp_theorem1,
    "tail": _exp_tail,
    "clt": _exp_clt,
    "bounds": _exp_bounds,
    "verify-split": _exp_verify_split,
    "properties": _exp_properties,
}


# output -------------------------------------------------------------------------

def _clean(x):
    """JSON-ready copy with floats fixed to 12 significant digits."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_clean(v) for v in x.tolist()]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(f"{x:.12g}")
    return x


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt_cell(v) for v in row])
    return buf.getvalue()


def _fmt_cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.12g}"
    return "" if v is None else str(v)


def _verdicts(obj):
    if isinstance(obj, dict):
        for k, v in obj.items():
            if k in ("verdict", "overall") and isinstance(v, str):
                yield v
            else:
                yield from _verdicts(v)
    elif isinstance(obj, list):
        for v in obj:
            yield from _verdicts(v)


def execute(config: dict, threads: int = 1) -> tuple[dict, str]:
    """Validate and run one config; returns the report and the CSV text."""
    validate(config)
    model = build_model(config["model"])
    phi = build_phi(config["phi"]) if "phi" in config else None
    report, header, rows = RUNNERS[config["experiment"]](config, model, phi, threads)
    report.setdefault("seed", config["seed"])
    report.setdefault("phi", phi.to_dict() if phi is not None else None)
    return report, _csv_text(header, rows)


def emit_report(report, csv_text: str | None, json_path: Path,
                csv_path: Path | None) -> None:
    json_path.parent.mkdir(parents=True, exist_ok=True)
    json_path.write_text(dumps(report))
    if csv_path is not None and csv_text is not None:
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        csv_path.write_text(csv_text)


def _summary(report) -> str:
    verdicts = list(_verdicts(report))
    failed = sum(v != "pass" for v in verdicts)
    return (f"{report['experiment']}: {report['overall']} "
            f"({len(verdicts) - failed}/{len(verdicts)} verdicts pass)")


def _exit_code(report) -> int:
    return 0 if all(v == "pass" for v in _verdicts(report)) else 1


def cmd_run(args) -> int:
    try:
        config = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None and isinstance(config, dict):
        config["seed"] = args.seed
    try:
        report, csv_text = execute(config, args.threads)
        name = config["experiment"]
        out = Path(args.out)
        outputs = config.get("outputs", {})
        json_path = out / outputs.get("json", f"{name}.json")
        csv_path = out / outputs.get("csv", f"{name}.csv")
        emit_report(report, csv_text, json_path, csv_path)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SplitFieldError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(_summary(report))
    return _exit_code(report)


def selftest_configs(seed: int) -> list[dict]:
    """Small fixed configs covering every experiment type."""
    unit = {"pieces": [{"lower": [0.0], "upper": [1.0], "value": 1.0}]}
    unit2 = {"pieces": [{"lower": [0.0, 0.0], "upper": [1.0, 1.0], "value": 1.0}]}
    poisson = {"name": "poisson"}
    return [
        {"experiment": "sample", "seed": seed, "model": poisson,
         "window": {"lower": [0.0], "upper": [8.0]}},
        {"experiment": "cgf", "seed": seed, "model": poisson, "phi": unit, "r": 1.0,
         "lambdas": [-0.2, -0.1, 0.0, 0.1, 0.2], "n": 20_000},
        {"experiment": "theorem1", "seed": seed, "model": poisson, "phi": unit,
         "schedule": [{"r": 4.0, "lambda": 0.2}, {"r": 4.0, "lambda": 0.1},
                      {"r": 4.0, "lambda": 0.05}, {"r": 4.0, "lambda": 0.02}]},
        {"experiment": "theorem1", "seed": seed, "model": {"name": "poisson", "dim": 2},
         "phi": unit2, "schedule": [{"r": [32.0, 64.0], "lambda": 0.05}],
         "outputs": {"json": "theorem1_2d.json", "csv": "theorem1_2d.csv"}},
        {"experiment": "tail", "seed": seed, "model": poisson, "phi": unit,
         "scales": [1e5, 1e6, 1e7], "c": 100.0, "method": "exact"},
        {"experiment": "tail", "seed": seed, "model": poisson, "phi": unit,
         "scales": [1e4], "c": 2.0, "method": "tilted", "n": 100_000, "check": "exact",
         "outputs": {"json": "tail_tilted.json", "csv": "tail_tilted.csv"}},
        {"experiment": "clt", "seed": seed, "model": poisson, "phi": unit, "r": 4096.0,
         "n": 20_000},
        {"experiment": "bounds", "seed": seed, "model": poisson,
         "bounds": {"k_max": 4, "n_max": 4}},
        {"experiment": "verify-split", "seed": seed, "model": poisson,
         "window": {"lower": [0.0], "upper": [8.0]}, "n": 1000},
        {"experiment": "properties", "seed": seed, "model": poisson,
         "shapes": [[1.0], [2.0], [4.0]], "lambdas": [-0.5, -0.1, 0.1, 0.5]},
    ]


def cmd_selftest(args) -> int:
    seed = 0 if args.seed is None else args.seed
    out = Path(args.out)
    results = []
    worst = 0
    for cfg in selftest_configs(seed):
        outputs = cfg.get("outputs", {})
        name = cfg["experiment"]
        try:
            report, csv_text = execute(cfg, args.threads)
            emit_report(report, csv_text, out / outputs.get("json", f"{name}.json"),
                        out / outputs.get("csv", f"{name}.csv"))
        except (SplitFieldError, OSError) as exc:
            print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
            return 2
        print(_summary(report))
        results.append({"experiment": name, "overall": report["overall"]})
        worst = max(worst, _exit_code(report))
    try:
        (out / "selftest.json").write_text(dumps({"seed": seed, "results": results}))
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return worst


def cmd_schema(args) -> int:
    sys.stdout.write(json.dumps(SCHEMA, indent=2, sort_keys=True) + "\n")
    return 0


def _u64(text):
    return rngmod.check_seed(int(text, 0))


def _common_flags(suppress: bool) -> argparse.ArgumentParser:
    # flags may appear before or after the subcommand; the subcommand copies
    # must not overwrite values given at the top level
    def default(v):
        return argparse.SUPPRESS if suppress else v

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_u64, default=default(None),
                        help="override the config seed (unsigned 64-bit)")
    common.add_argument("--threads", type=int, default=default(1),
                        help="worker threads for sampling")
    common.add_argument("--out", default=default("out"), help="output directory")
    return common


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="splitfield", description=__doc__.splitlines()[0],
                                parents=[_common_flags(False)])
    sub = p.add_subparsers(dest="command", required=True)
    common = _common_flags(True)
    run = sub.add_parser("run", parents=[common], help="run one experiment config")
    run.add_argument("config")
    run.set_defaults(func=cmd_run)
    sub.add_parser("schema", parents=[common], help="print the config JSON schema") \
        .set_defaults(func=cmd_schema)
    sub.add_parser("selftest", parents=[common], help="run a fixed deterministic suite") \
        .set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    if args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
