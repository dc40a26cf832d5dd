"""Configuration-driven experiment runner.

Single binary with subcommand dispatch:

    acyl-lab elliptic | glue | solve | gauge | estimates | pipeline | report

Every run is reproduced bit-exactly from (config, seed); wall-clock
times are reported in a separate "timings" block that is excluded from
the reproducibility contract.  Reports are JSON documents validating
against report_schema.json (shipped with the package), optionally
accompanied by CSV series and native SVG plots.

Exit codes: 0 all verdicts pass, 2 configuration/schema error, 3
numerical failure (a partial report is still written).
"""

from __future__ import annotations

import argparse
import glob as globmod
import json
import math
import os
import sys
import time
from importlib import resources

import numpy as np

from . import cyl_elliptic, estimates_lab, gauge_lab, glue_construct, \
    ma_solver
from .field_core import ScalarField, make_grid
from .kahler_kernel import PositivityError

SCHEMA_VERSION = "acyl-lab-report-1"

DEFAULT_CONFIG = {
    "seed": 0,
    "tol_scale": 1.0,
    "workers": 1,
    "grid": {"t_min": -12.0, "t_max": 12.0, "n_t": 241,
             "n_theta": 2, "n_x": 2, "n_y": 2},
    "glue": {"r": 0.05, "s": 0.0025, "r0": 0.3},
    "elliptic": {"operator": "laplacian", "cross_section": "circle",
                 "range": [-5.0, 5.0], "scan_points": 201,
                 "cond_threshold": 1e6},
    "solve": {"tol": 1e-11},
    "pipeline": {"refine": True, "reference_factor": 10},
    "gauge": {"amplitude": 0.02, "rate": 1.0, "target": "x",
              "t0": 2.0, "length": 12.0, "n_t": 181, "n_theta": 16,
              "torus_points": 4},
    "estimates": {"mu": 0.25, "sigma": 1.5, "trials": 200,
                  "s_rule": "r2"},
}


# ---------------------------------------------------------------------------
# minimal JSON-schema validation (the subset the shipped schemas use)

class SchemaError(ValueError):
    pass


_TYPES = {
    "object": dict, "array": list, "string": str, "boolean": bool,
    "number": (int, float), "integer": int,
}


def validate_schema(obj, schema, path="$"):
    """Validate obj against the subset of JSON schema used here."""
    typ = schema.get("type")
    if typ is not None:
        pytype = _TYPES[typ]
        ok = isinstance(obj, pytype)
        if typ in ("number", "integer") and isinstance(obj, bool):
            ok = False
        if not ok:
            raise SchemaError(f"{path}: expected {typ}")
    if "enum" in schema and obj not in schema["enum"]:
        raise SchemaError(f"{path}: {obj!r} not one of {schema['enum']}")
    if isinstance(obj, (int, float)) and not isinstance(obj, bool):
        if "minimum" in schema and obj < schema["minimum"]:
            raise SchemaError(f"{path}: {obj} below minimum")
        if "maximum" in schema and obj > schema["maximum"]:
            raise SchemaError(f"{path}: {obj} above maximum")
    if isinstance(obj, dict):
        if "minProperties" in schema and len(obj) < schema["minProperties"]:
            raise SchemaError(f"{path}: object must not be empty")
        props = schema.get("properties", {})
        for key in schema.get("required", []):
            if key not in obj:
                raise SchemaError(f"{path}: missing required key {key!r}")
        for key, val in obj.items():
            if key in props:
                validate_schema(val, props[key], f"{path}.{key}")
            elif schema.get("additionalProperties", True) is False:
                raise SchemaError(f"{path}: unknown key {key!r}")
    if isinstance(obj, list):
        if "minItems" in schema and len(obj) < schema["minItems"]:
            raise SchemaError(f"{path}: need >= {schema['minItems']} items")
        if "maxItems" in schema and len(obj) > schema["maxItems"]:
            raise SchemaError(f"{path}: need <= {schema['maxItems']} items")
        if "items" in schema:
            for i, val in enumerate(obj):
                validate_schema(val, schema["items"], f"{path}[{i}]")


def _load_schema(name):
    with resources.files("acyl_lab").joinpath(name).open() as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# report plumbing

def criterion(cid, value, threshold, kind="max"):
    value = float(value)
    ok = value <= threshold if kind == "max" else value >= threshold
    return {"id": cid, "value": value, "threshold": float(threshold),
            "kind": kind, "pass": bool(ok)}


class Runner:
    def __init__(self, config, seed, tol_scale, out_dir, workers):
        self.config = config
        self.seed = seed
        self.tol_scale = tol_scale
        self.out = out_dir
        self.workers = workers
        self.stages = []
        self.timings = {}

    def stage(self, name, metrics, criteria):
        self.stages.append({"name": name, "metrics": metrics,
                            "criteria": criteria})

    def report(self, subcommand, error=None):
        rep = {
            "schema": SCHEMA_VERSION,
            "subcommand": subcommand,
            "seed": self.seed,
            "tol_scale": self.tol_scale,
            "config": self.config,
            "stages": self.stages,
            "pass": bool(all(c["pass"] for st in self.stages
                             for c in st["criteria"]) and error is None),
            "timings": self.timings,
        }
        if error is not None:
            rep["error"] = error
        return rep


def _write_report(rep, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "report.json")
    with open(path, "w") as fh:
        json.dump(rep, fh, indent=2)
        fh.write("\n")
    return path


# ---------------------------------------------------------------------------
# native SVG plotting

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#e377c2", "#17becf"]


def svg_plot(path, curves, title="", xlabel="", ylabel="", logx=False,
             logy=False, width=640, height=480):
    """Write a minimal line plot; curves is [(label, xs, ys), ...]."""
    ml, mr, mt, mb = 60, 20, 40, 50
    pw, ph = width - ml - mr, height - mt - mb

    def tx(v):
        return math.log10(v) if logx else v

    def ty(v):
        return math.log10(v) if logy else v

    xs_all = [tx(x) for _, xs, _ in curves for x in xs]
    ys_all = [ty(y) for _, _, ys in curves for y in ys]
    x0, x1 = min(xs_all), max(xs_all)
    y0, y1 = min(ys_all), max(ys_all)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def px(v):
        return ml + (tx(v) - x0) / (x1 - x0) * pw

    def py(v):
        return mt + ph - (ty(v) - y0) / (y1 - y0) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" '
        'stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" '
        'stroke="black"/>',
        f'<text x="{width / 2}" y="24" text-anchor="middle" '
        f'font-size="16">{title}</text>',
        f'<text x="{ml + pw / 2}" y="{height - 12}" text-anchor="middle" '
        f'font-size="12">{xlabel}</text>',
        f'<text x="16" y="{mt + ph / 2}" text-anchor="middle" '
        f'font-size="12" transform="rotate(-90 16 {mt + ph / 2})">'
        f'{ylabel}</text>',
    ]
    for i, (label, xs, ys) in enumerate(curves):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{ml + pw - 4}" y="{mt + 14 + 14 * i}" '
                     f'text-anchor="end" font-size="11" fill="{color}">'
                     f'{label}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


# ---------------------------------------------------------------------------
# subcommand implementations

def _timed(runner, name, fn):
    t0 = time.perf_counter()
    out = fn()
    runner.timings[name] = time.perf_counter() - t0
    return out


def _run_elliptic(runner, args):
    cfg = runner.config["elliptic"]
    lo, hi = cfg["range"]
    weights = cyl_elliptic.critical_weights(cfg["operator"],
                                            cfg["cross_section"], (lo, hi))
    if getattr(args, "list_critical", False):
        for c in weights:
            print(f"{c.delta:+g}  solutions {c.solution_count}")
    deltas = np.linspace(lo, hi, cfg["scan_points"])
    conds = _timed(runner, "degeneracy_scan",
                   lambda: cyl_elliptic.degeneracy_scan(
                       cfg["operator"], cfg["cross_section"], deltas))
    crit = np.array([c.delta for c in weights])
    half = 0.5 * (deltas[1] - deltas[0])
    near = np.min(np.abs(deltas[:, None] - crit[None, :]), axis=1) <= half
    mismatch = int(np.sum((conds > cfg["cond_threshold"]) != near))
    runner.stage("elliptic", {
        "weights": [c.delta for c in weights],
        "solution_counts": [c.solution_count for c in weights],
        "scan_points": int(deltas.size),
    }, [criterion("degeneracy-dichotomy", mismatch, 0.5)])


def _build_background(runner):
    g = runner.config["grid"]
    gl = runner.config["glue"]
    grid = make_grid(g["t_min"], g["t_max"], g["n_t"], g["n_theta"],
                     g["n_x"], g["n_y"])
    t_b, c0, c1 = glue_construct.solve_volume_condition(gl["r"], gl["s"],
                                                        gl["r0"], grid)
    bg = glue_construct.build_background(gl["r"], gl["s"], gl["r0"], t_b,
                                         grid)
    return grid, bg, (t_b, c0, c1)


def _run_glue(runner, args):
    grid, bg, (t_b, c0, c1) = _timed(runner, "background",
                                     lambda: _build_background(runner))
    f, int_res, decay = glue_construct.compute_calibration_f(bg)
    vol = glue_construct.total_volume(bg)
    runner.stage("glue", {
        "t_b": t_b, "c0": c0, "c1": c1,
        "min_eigenvalue": bg.min_eigenvalue,
        "end_decay_rate": bg.end_decay_rate,
        "total_volume": vol,
        "calibration_decay_rate": decay,
    }, [
        criterion("volume-integral", abs(int_res) / vol,
                  1e-8 * runner.tol_scale),
        criterion("background-positivity", bg.min_eigenvalue, 0.0,
                  kind="min"),
    ])
    return grid, bg, f


def _flat_error(bg, u):
    """Sup distance of the recovered horizontal coefficient from 1, in
    the solver's own discretisation."""
    grid = u.grid
    D2 = ma_solver._d2_t_matrix(grid.n_t, grid.h_t)
    h11 = bg.omega.h11 + (D2 @ u.values) / 4.0
    return float(np.max(np.abs(h11 - 1.0)))


def _run_solve(runner, args):
    grid, bg, f = _run_glue(runner, args)
    tol = runner.config["solve"]["tol"]
    res = _timed(runner, "continuity_solve",
                 lambda: ma_solver.continuity_solve(bg.omega, f, tol=tol))
    flat = _flat_error(bg, res.u)
    runner.stage("solve", {
        "newton_residual": res.residual,
        "iterations": res.iterations,
        "converged": res.converged,
    }, [
        criterion("flat-recovery", flat, 1e-4 * runner.tol_scale),
        criterion("newton-converged", float(res.converged), 0.5, kind="min"),
    ])
    return grid, bg, f, res


def _affine_free_sup(t, d):
    X = np.column_stack([np.ones_like(t), t])
    coef, *_ = np.linalg.lstsq(X, d, rcond=None)
    return float(np.max(np.abs(d - X @ coef)))


def _run_pipeline(runner, args):
    grid, bg, f, res = _run_solve(runner, args)
    pcfg = runner.config["pipeline"]
    if not pcfg["refine"]:
        return
    g = runner.config["grid"]
    gl = runner.config["glue"]

    def solve_at(n_t):
        gr = make_grid(g["t_min"], g["t_max"], n_t, g["n_theta"], g["n_x"],
                       g["n_y"])
        t_b, _, _ = glue_construct.solve_volume_condition(gl["r"], gl["s"],
                                                          gl["r0"], gr)
        b = glue_construct.build_background(gl["r"], gl["s"], gl["r0"], t_b,
                                            gr)
        ff, _, _ = glue_construct.compute_calibration_f(b)
        return gr, ma_solver.continuity_solve(b.omega, ff).u

    def reference(n_t, factor):
        n_ref = factor * (n_t - 1) + 1
        gr = make_grid(g["t_min"], g["t_max"], n_ref, g["n_theta"], g["n_x"],
                       g["n_y"])
        t_b, _, _ = glue_construct.solve_volume_condition(gl["r"], gl["s"],
                                                          gl["r0"], gr)
        b = glue_construct.build_background(gl["r"], gl["s"], gl["r0"], t_b,
                                            gr)
        ff, _, _ = glue_construct.compute_calibration_f(b)
        return ma_solver.radial_oracle(b.omega, ff)

    def refinement_ratio():
        factor = pcfg["reference_factor"]
        n1 = g["n_t"]
        n2 = 2 * (n1 - 1) + 1
        errs = []
        for n in (n1, n2):
            gr, u = solve_at(n)
            ref = reference(n, factor)
            errs.append(_affine_free_sup(gr.t,
                                         u.values - ref.values[::factor]))
        return errs[0], errs[1]

    e1, e2 = _timed(runner, "refinement", refinement_ratio)
    ratio = e1 / e2 if e2 > 0 else math.inf
    runner.stage("refinement", {
        "coarse_error": e1, "fine_error": e2, "ratio": ratio,
    }, [criterion("refinement-gain", ratio, 3.5, kind="min")])


def _run_gauge(runner, args):
    cfg = runner.config["gauge"]
    rng = np.random.default_rng(runner.seed)
    spec = [gauge_lab.DisplacementMode(
        cfg["target"], cfg["amplitude"], cfg["rate"],
        phase=float(rng.uniform(0.0, 2.0 * math.pi)))]
    structure = gauge_lab.make_perturbed_structure(spec,
                                                   0.9 * cfg["rate"])
    family = _timed(runner, "cylinders",
                    lambda: gauge_lab.find_holomorphic_cylinders(
                        structure, t0=cfg["t0"], length=cfg["length"],
                        n_t=cfg["n_t"], n_theta=cfg["n_theta"],
                        torus_shape=(cfg["torus_points"],
                                     cfg["torus_points"])))
    dev = gauge_lab.planted_image_deviation(structure, family)
    jg = gauge_lab.gauge_structure(structure, family)
    torsion = gauge_lab.torsion_residual(jg, family.t)
    runner.stage("gauge", {
        "contraction_iterations": family.iterations,
        "dbar_residual": family.residual,
        "planted_rate": structure.measured_rate,
    }, [
        criterion("cylinder-recovery", dev, 1e-6 * runner.tol_scale),
        criterion("torsion", torsion, 1e-8 * runner.tol_scale),
    ])


def _run_estimates(runner, args):
    cfg = runner.config["estimates"]
    mr, const = _timed(runner, "sobolev",
                       lambda: estimates_lab.sobolev_verify(
                           cfg["mu"], cfg["sigma"], trials=cfg["trials"],
                           seed=runner.seed))
    rows = _timed(runner, "table_rows",
                  lambda: estimates_lab.table_integral_orders(
                      rows=cfg.get("rows"),
                      r_sweep=cfg.get("r_sweep"),
                      s_rule=cfg["s_rule"],
                      workers=runner.workers))
    os.makedirs(runner.out, exist_ok=True)
    estimates_lab.write_sweep_csv(rows,
                                  os.path.join(runner.out,
                                               "estimates_rows.csv"))
    curves = [(row.row_id, list(row.r), list(row.value))
              for row in rows if row.dominant]
    if curves:
        svg_plot(os.path.join(runner.out, "estimates_rows.svg"), curves,
                 title="dominant table rows", xlabel="r", ylabel="integral",
                 logx=True, logy=True)
    n_fail = sum(1 for row in rows
                 if not (row.passes and row.dominance_ok))
    runner.stage("estimates", {
        "sobolev_max_ratio": mr,
        "sobolev_constant": const,
        "rows": len(rows),
        "rows_failed": n_fail,
    }, [
        criterion("table-rows", n_fail, 0.5),
        criterion("sobolev-finite", mr, 0.0, kind="min"),
    ])


def _run_report(runner, args):
    paths = []
    for pattern in args.inputs:
        hits = sorted(globmod.glob(pattern))
        paths.extend(hits if hits else [pattern])
    if not paths:
        raise SchemaError("report: no inputs")
    schema = _load_schema("report_schema.json")
    matrix = []
    verdicts = []
    for p in paths:
        with open(p) as fh:
            rep = json.load(fh)
        validate_schema(rep, schema)
        crits = [c for st in rep["stages"] for c in st["criteria"]]
        matrix.append({"file": os.path.basename(p),
                       "subcommand": rep["subcommand"],
                       "pass": rep["pass"],
                       "criteria": crits})
        verdicts.append(rep["pass"])
    merged = runner.report("report")
    merged["inputs"] = [os.path.basename(p) for p in paths]
    merged["matrix"] = matrix
    merged["pass"] = bool(all(verdicts))
    return merged


_RUNNERS = {
    "elliptic": _run_elliptic,
    "glue": _run_glue,
    "solve": _run_solve,
    "gauge": _run_gauge,
    "estimates": _run_estimates,
    "pipeline": _run_pipeline,
}

_NUMERICAL_ERRORS = (PositivityError, FloatingPointError, RuntimeError,
                     np.linalg.LinAlgError)


def _merge_config(base, override):
    out = {}
    for key, val in base.items():
        if isinstance(val, dict):
            out[key] = dict(val)
            out[key].update(override.get(key, {}))
        else:
            out[key] = override.get(key, val)
    return out


def build_parser():
    parser = argparse.ArgumentParser(
        prog="acyl-lab",
        description="numerical experiments on the model cylinder geometry")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="JSON configuration file")
    common.add_argument("--out", metavar="DIR", default="acyl-out",
                        help="output directory (default: acyl-out)")
    common.add_argument("--seed", type=int, metavar="N")
    common.add_argument("--workers", type=int, metavar="N")
    common.add_argument("--tol-scale", type=float, metavar="X",
                        dest="tol_scale")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in ("elliptic", "glue", "solve", "gauge", "estimates",
                 "pipeline"):
        sp = sub.add_parser(name, parents=[common])
        if name == "elliptic":
            sp.add_argument("--list-critical", action="store_true",
                            dest="list_critical")
            sp.add_argument("--range", type=float, nargs=2,
                            metavar=("LO", "HI"))
    rp = sub.add_parser("report", parents=[common])
    rp.add_argument("inputs", nargs="+",
                    help="report JSON files or glob patterns")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        user_cfg = {}
        if args.config:
            with open(args.config) as fh:
                user_cfg = json.load(fh)
            validate_schema(user_cfg, _load_schema("config_schema.json"))
        config = _merge_config(DEFAULT_CONFIG, user_cfg)
        if getattr(args, "range", None):
            config["elliptic"]["range"] = list(args.range)
        seed = args.seed if args.seed is not None else config["seed"]
        tol_scale = args.tol_scale if args.tol_scale is not None \
            else config["tol_scale"]
        if args.workers is not None:
            workers = args.workers
        elif "ACYL_CY_WORKERS" in os.environ:
            workers = int(os.environ["ACYL_CY_WORKERS"])
        else:
            workers = config["workers"]
    except (SchemaError, OSError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    runner = Runner(config, seed, tol_scale, args.out, workers)
    if args.subcommand == "report":
        try:
            merged = _run_report(runner, args)
        except (SchemaError, OSError, json.JSONDecodeError) as exc:
            print(f"report error: {exc}", file=sys.stderr)
            return 2
        _write_report(merged, args.out)
        return 0 if merged["pass"] else 3
    error = None
    try:
        _RUNNERS[args.subcommand](runner, args)
    except _NUMERICAL_ERRORS as exc:
        error = f"{type(exc).__name__}: {exc}"
        print(f"numerical failure: {error}", file=sys.stderr)
    rep = runner.report(args.subcommand, error=error)
    path = _write_report(rep, args.out)
    print(f"report written to {path}; pass = {rep['pass']}")
    if error is not None:
        return 3
    return 0 if rep["pass"] else 3


if __name__ == "__main__":
    sys.exit(main())
