"""Command-line front end.

``rmhb <command> --config run.json [--out DIR] [--seed N] [--threads N]``
with commands ``plan``, ``solve``, ``aliasing``, ``montecarlo``, ``bench``
and ``integrate``.  Exit codes: 0 success, 2 configuration error,
3 non-convergence, 4 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import experiments as ex
from . import io
from .basis import BasisError, build_basis
from .collocation import PlanError, aliasing_sweep, sampling_plan
from .models import ModelError, StructuralModel, _freq_from_config, model_from_config, recast_to_first_order
from .operators import coefficient_records, embed_coefficients, grad_block, synthesize
from .reference import IntegrationError, amplitude_spectrum, default_dt, rk4_integrate, steady_window
from .solvers.assembly import AssemblyError, assemble_rmhb_first_order, assemble_rmhb_second_order
from .solvers.montecarlo import find_branches, monte_carlo_branches
from .solvers.nonlinear import SingularJacobianError, SolverConfig, StagnationError, solve

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3
EXIT_NUMERICAL = 4
OUTPUT_ENV = "RMHB_OUTPUT_DIR"
COMMANDS = ("plan", "solve", "aliasing", "montecarlo", "bench", "integrate")
STUDIES = ("vdp_sweep", "hdhb_contrast", "goia_contrast", "duffing2", "airfoil", "duffing_mc")


class ConfigError(ValueError):
    pass


class NonConvergence(RuntimeError):
    pass


_FREQ = {"oneOf": [
    {"type": "integer", "exclusiveMinimum": 0},
    {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
    {"type": "object", "required": ["num"], "additionalProperties": False,
     "properties": {"num": {"type": "integer"}, "den": {"type": "integer"},
                    "unit": {"enum": ["rad", "cycles"]}}},
    {"type": "object", "required": ["value", "irrational"], "additionalProperties": False,
     "properties": {"value": {"type": "number"}, "irrational": {"const": True}}},
]}

SCHEMA = {
    "type": "object",
    "required": ["model"],
    "additionalProperties": False,
    "properties": {
        "model": {"type": "object", "required": ["name"], "additionalProperties": False,
                  "properties": {"name": {"type": "string"}, "params": {"type": "object"}}},
        "basis": {"type": "object", "additionalProperties": False,
                  "properties": {"order": {"type": "integer", "minimum": 1},
                                 "frequencies": {"type": "array", "items": _FREQ, "minItems": 1}}},
        "plan": {"type": "object", "additionalProperties": False,
                 "properties": {"T": {"type": "number", "exclusiveMinimum": 0},
                                "M": {"type": "integer", "minimum": 1}}},
        "solver": {"type": "object", "additionalProperties": False,
                   "properties": {"method": {"enum": ["newton", "goia"]},
                                  "tol_residual_inf": {"type": "number", "exclusiveMinimum": 0},
                                  "max_iter": {"type": "integer", "minimum": 1},
                                  "fd_step": {"type": "number", "exclusiveMinimum": 0},
                                  "gamma": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                                  "damping": {"type": "boolean"},
                                  "max_halvings": {"type": "integer", "minimum": 0},
                                  "jacobian": {"enum": ["auto", "fd"]},
                                  "singular": {"enum": ["raise", "lstsq"]},
                                  "golden_iters": {"type": "integer", "minimum": 1}}},
        "seed": {"type": "integer"},
        "output": {"type": "string"},
        "solve": {"type": "object", "additionalProperties": False, "properties": {
            "form": {"enum": ["first", "second"]},
            "forcing_mode": {"enum": ["sampled", "exact"]},
            "free_frequencies": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            "phase_dof": {"type": "integer", "minimum": 0},
            "order_continuation": {"type": "boolean"},
            "velocity_from_derivative": {"type": "boolean"},
            "initial": {"type": "array", "items": {
                "type": "object", "required": ["dof", "index", "value"], "additionalProperties": False,
                "properties": {"dof": {"type": "integer", "minimum": 0},
                               "index": {"type": "array", "items": {"type": "integer"}},
                               "part": {"enum": ["c", "s"]}, "value": {"type": "number"}}}}}},
        "aliasing": {"type": "object", "additionalProperties": False, "properties": {
            "M": {"oneOf": [{"type": "array", "items": {"type": "integer", "minimum": 1}},
                            {"type": "object", "required": ["start", "stop"],
                             "additionalProperties": False,
                             "properties": {"start": {"type": "integer", "minimum": 1},
                                            "stop": {"type": "integer", "minimum": 1},
                                            "step": {"type": "integer", "minimum": 1}}}]},
            "T_equals_M": {"type": "boolean"}}},
        "montecarlo": {"type": "object", "additionalProperties": False, "properties": {
            "M": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
            "n_samples": {"type": "integer", "minimum": 0},
            "init_range": {"type": "number", "exclusiveMinimum": 0},
            "match_tol": {"type": "number", "exclusiveMinimum": 0},
            "reference_points": {"type": "integer", "minimum": 1}}},
        "bench": {"type": "object", "required": ["study"], "additionalProperties": False,
                  "properties": {"study": {"enum": list(STUDIES)},
                                 "TM": {"type": "array", "items": {"type": "number"}},
                                 "orders": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                                 "rhb": {"type": "array", "items": {
                                     "type": "array", "items": {"type": "integer", "minimum": 1},
                                     "minItems": 2, "maxItems": 2}},
                                 "x_beta": {"type": "number"}}},
        "integrate": {"type": "object", "additionalProperties": False, "properties": {
            "x0": {"type": "array", "items": {"type": "number"}},
            "dt": {"type": "number", "exclusiveMinimum": 0},
            "t_end": {"type": "number", "minimum": 0},
            "discard": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
            "store_every": {"type": "integer", "minimum": 1},
            "spectrum": {"type": "boolean"}}},
    },
}


def _path(err) -> str:
    parts = [str(p) for p in err.absolute_path]
    return "/".join(parts) if parts else "<root>"


def validate_config(cfg) -> dict:
    """Check ``cfg`` against the schema; errors name the offending field path."""
    import jsonschema

    if not isinstance(cfg, dict):
        raise ConfigError("<root>: configuration must be a JSON object")
    errors = sorted(jsonschema.Draft7Validator(SCHEMA).iter_errors(cfg), key=_path)
    if errors:
        raise ConfigError("; ".join(f"{_path(e)}: {e.message}" for e in errors))
    return cfg


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return validate_config(cfg)


def _model(cfg):
    m = cfg["model"]
    try:
        return model_from_config(m["name"], m.get("params"))
    except (ModelError, TypeError) as exc:
        raise ConfigError(f"model: {exc}") from None


def _basis(cfg, model):
    b = cfg.get("basis", {})
    freqs = model.frequencies
    if "frequencies" in b:
        try:
            freqs = tuple(_freq_from_config(f) for f in b["frequencies"])
        except ModelError as exc:
            raise ConfigError(f"basis/frequencies: {exc}") from None
    try:
        return build_basis(freqs, b.get("order", 1))
    except BasisError as exc:
        raise ConfigError(f"basis: {exc}") from None


def _plan(cfg, basis, phi):
    try:
        return sampling_plan(basis, phi, cfg.get("plan"))
    except PlanError as exc:
        raise ConfigError(f"plan: {exc}") from None


def _solver(cfg) -> SolverConfig:
    kw = dict(cfg.get("solver", {}))
    if "seed" in cfg:
        kw["seed"] = cfg["seed"]
    try:
        return SolverConfig(**kw)
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from None


def _meta(cfg, command, wall):
    return {"command": command, "config": cfg, "wall_time": wall, "seed": cfg.get("seed"),
            "versions": {"python": platform.python_version(), "numpy": np.__version__,
                         "scipy": scipy.__version__}}


# ---------------------------------------------------------------- commands

def cmd_plan(cfg, out: Path, opts) -> dict:
    model = _model(cfg)
    basis = _basis(cfg, model)
    plan = _plan(cfg, basis, model.phi)
    rec = {"T": plan.T, "M": plan.M, "critical_M": plan.critical_M,
           "ratio_class": plan.ratio_class, "de_aliased": plan.de_aliased,
           "per_dof_dim": basis.per_dof_dim, "order": basis.order,
           "frequencies": [str(f) for f in basis.frequencies]}
    io.write_json(out / "plan.json", rec)
    print(f"T = {plan.T!r}  critical_M = {plan.critical_M}  M = {plan.M}  "
          f"ratio = {plan.ratio_class}  de-aliased = {plan.de_aliased}")
    return rec


def _assemble(cfg, model, basis, plan):
    s = cfg.get("solve", {})
    form = s.get("form", "second" if isinstance(model, StructuralModel) else "first")
    kw = dict(free_frequencies=tuple(s.get("free_frequencies", ())), phase_dof=s.get("phase_dof", 0),
              forcing_mode=s.get("forcing_mode", "sampled"))
    try:
        if form == "second":
            if not isinstance(model, StructuralModel):
                raise ConfigError("solve/form: 'second' needs a structural model")
            return assemble_rmhb_second_order(model, basis, plan, **kw)
        fo = recast_to_first_order(model) if isinstance(model, StructuralModel) else model
        return assemble_rmhb_first_order(fo, basis, plan, **kw)
    except AssemblyError as exc:
        raise ConfigError(f"solve: {exc}") from None


def _initial(cfg, system, basis):
    s = cfg.get("solve", {})
    x = np.zeros(system.n_coeffs)
    D = basis.per_dof_dim
    for k, rec in enumerate(s.get("initial", [])):
        try:
            j, sign = basis.position(tuple(rec["index"]))
        except KeyError as exc:
            raise ConfigError(f"solve/initial/{k}/index: {exc}") from None
        if rec["dof"] >= system.N:
            raise ConfigError(f"solve/initial/{k}/dof: out of range for N={system.N}")
        part = rec.get("part", "c")
        if part == "s" and j == 0:
            raise ConfigError(f"solve/initial/{k}/part: the constant has no sine part")
        pos = rec["dof"] * D + j + (1 if part == "s" else 0)
        x[pos] = rec["value"] * (sign if part == "s" else 1)
    if s.get("velocity_from_derivative", True) and system.N % 2 == 0 and \
            system.provenance.startswith("RMHB-first"):
        half = system.N // 2
        G = grad_block(basis)
        for d in range(half):
            if not np.any(x[(half + d) * D:(half + d + 1) * D]):
                x[(half + d) * D:(half + d + 1) * D] = G @ x[d * D:(d + 1) * D]
    return system.initial(x)


def cmd_solve(cfg, out: Path, opts) -> dict:
    model = _model(cfg)
    basis = _basis(cfg, model)
    config = _solver(cfg)
    cont = cfg.get("solve", {}).get("order_continuation", False)
    orders = list(range(1, basis.order + 1)) if cont else [basis.order]
    z, prev, trace = None, None, []
    for q in orders:
        bq = build_basis(basis.frequencies, q)
        plan = _plan(cfg if q == basis.order else {}, bq, model.phi)
        system = _assemble(cfg, model, bq, plan)
        if z is None:
            z0 = _initial(cfg, system, bq)
        else:
            xh, w = prev[0].split(z)
            z0 = np.concatenate([embed_coefficients(xh, prev[1], bq), w])
        res = solve(system, z0, config)
        trace += res.trace
        if not res.converged:
            break
        z, prev = res.xhat, (system, bq)
    xh, w = system.split(res.xhat)
    names = getattr(model, "dof_names", None) or getattr(model, "state_names", None) or ()
    names = list(names) if len(names) == system.N else None
    rec = {"converged": res.converged, "iterations": res.iterations,
           "residual_norm": res.residual_norm, "wall_time": res.wall_time, "message": res.message,
           "provenance": system.provenance, "jacobian": system.jacobian_mode,
           "plan": {"T": plan.T, "M": plan.M, "critical_M": plan.critical_M,
                    "de_aliased": plan.de_aliased},
           "free_frequencies": dict(zip(map(str, system.free_frequencies), w.tolist())),
           "coefficients": coefficient_records(xh, bq, names)}
    io.write_json(out / "solution.json", rec)
    io.write_csv(out / "trace.csv", ["iteration", "residual_norm"], list(enumerate(trace)))
    X = synthesize(xh, system.solved_basis(res.xhat), plan.nodes)
    io.write_csv(out / "timeseries.csv", ["t"] + (names or [f"x{i}" for i in range(system.N)]),
                 np.column_stack([plan.nodes, X]).tolist())
    print(f"{system.provenance}: converged={res.converged} iterations={res.iterations} "
          f"residual={res.residual_norm:.3e}")
    if not res.converged:
        raise NonConvergence(res.message)
    return rec


def _Ms(spec):
    if isinstance(spec, dict):
        return list(range(spec["start"], spec["stop"] + 1, spec.get("step", 1)))
    return list(spec)


def cmd_aliasing(cfg, out: Path, opts) -> dict:
    model = _model(cfg)
    basis = _basis(cfg, model)
    a = cfg.get("aliasing", {})
    Ms = _Ms(a.get("M", {"start": 5, "stop": 120}))
    try:
        rows = [{"M": M, "T": T, "max_abs": r.max_abs, "frac_above": r.frac_above_threshold,
                 "is_zero": r.is_zero}
                for T, M, r in aliasing_sweep(basis, model.phi, Ms, T_equals_M=a.get("T_equals_M", False))]
    except PlanError as exc:
        raise ConfigError(f"aliasing: {exc}") from None
    io.write_csv(out / "fig3_aliasing.csv",
                 ["M", "T", "max_abs_element", "fraction_above_threshold", "is_zero"],
                 [[r["M"], r["T"], r["max_abs"], r["frac_above"], r["is_zero"]] for r in rows])
    io.write_json(out / "aliasing.json", {"rows": rows})
    for r in rows[:3] + rows[-1:]:
        print(f"M={r['M']}: max |E_A| = {r['max_abs']:.3e}")
    return {"rows": rows}


def cmd_montecarlo(cfg, out: Path, opts) -> dict:
    model = _model(cfg)
    basis = _basis(cfg, model)
    mc = cfg.get("montecarlo", {})
    config = _solver(cfg).but(singular=cfg.get("solver", {}).get("singular", "lstsq"))
    Ms = mc.get("M", [20, 41, 60])
    n = mc.get("n_samples", 500)
    rng = mc.get("init_range", 5.0)
    seed = cfg.get("seed", 0)
    crit = _plan({}, basis, model.phi) if basis.ratio_class == "rational" else None
    if crit is None:
        raise ConfigError("montecarlo: reference branches need a rational basis")
    ref_plan = sampling_plan(basis, model.phi, {"M": 3 * crit.critical_M})
    ref_sys = _assemble(cfg, model, basis, ref_plan)
    branches = find_branches(ref_sys, mc.get("reference_points", 256), rng, config)
    if not branches:
        raise NonConvergence("no reference branch found")
    rows = []
    for M in Ms:
        plan = sampling_plan(basis, model.phi, {"M": M})
        system = _assemble(cfg, model, basis, plan)
        res = monte_carlo_branches(system, n, rng, config, branches,
                                   mc.get("match_tol", 1e-4), seed=seed + M, workers=opts.threads)
        pct = res.percentages()
        rows.append({"M": M, "de_aliased": plan.de_aliased, "counts": res.counts,
                     "non_physical": res.non_physical, "non_converged": res.non_converged,
                     "percentages": pct})
        io.write_csv(out / f"fig2_histogram_M{M}.csv", ["sample", "label", "distance"],
                     [[i, int(l), float(d)] for i, (l, d) in enumerate(zip(res.labels, res.distances))])
        print(f"M={M}: " + "  ".join(f"{k}={v:.2f}%" for k, v in pct.items())
              + f"  non-converged={res.non_converged}")
    header = ["M"] + [f"branch_{k}_pct" for k in range(len(branches))] + ["non_physical_pct", "non_converged"]
    io.write_csv(out / "table_solution_details.csv", header,
                 [[r["M"]] + [r["percentages"][f"branch_{k}"] for k in range(len(branches))]
                  + [r["percentages"]["non_physical"], r["non_converged"]] for r in rows])
    rec = {"branches": [b.tolist() for b in branches], "rows": rows}
    io.write_json(out / "montecarlo.json", rec)
    return rec


def _table(rows, keys):
    return [[r.get(k, np.nan) if k != "failed" else r.get(k, "") for k in keys] for r in rows]


def cmd_bench(cfg, out: Path, opts) -> dict:
    b = cfg["bench"] if "bench" in cfg else None
    if b is None:
        raise ConfigError("bench: section required")
    study = b["study"]
    if study == "vdp_sweep":
        rec = ex.vdp_sweep(tuple(b.get("TM", (100, 500, 5000))), (b.get("orders") or [1])[0])
        keys = ["T", "M", "amp_10", "amp_01", "aliasing_error", "iterations", "converged"]
        io.write_csv(out / "table1_vdp_sweep.csv", keys, _table(rec["rows"], keys))
    elif study == "hdhb_contrast":
        rec = {"rows": ex.vdp_hdhb_contrast(tuple(b.get("TM", (100, 1000))))}
        keys = ["T", "M", "rmhb_time", "hdhb_time", "rmhb_error", "hdhb_error", "failed"]
        io.write_csv(out / "fig6_error.csv", keys, _table(rec["rows"], keys))
    elif study == "goia_contrast":
        rec = ex.vdp_goia_contrast()
        n, g = rec["newton"]["trace"], rec["goia"]["trace"]
        io.write_csv(out / "fig5_residuals.csv", ["iteration", "newton", "goia"],
                     [[i, n[i] if i < len(n) else np.nan, g[i] if i < len(g) else np.nan]
                      for i in range(max(len(n), len(g)))])
    elif study == "duffing2":
        rec = ex.duffing2_study(tuple(b.get("orders", (1, 5))),
                                tuple(tuple(c) for c in b.get("rhb", [[200, 801]])))
        keys = ["method", "M", "amplitude_error", "wall_time", "failed"]
        io.write_csv(out / "table2_duffing.csv", keys, _table(rec["rows"], keys))
    elif study == "airfoil":
        rec = ex.airfoil_study(tuple(b.get("orders", (1, 3))), b.get("x_beta", ex.AIRFOIL_X_BETA))
        rows = [{**r, **dict(zip(("dA_h", "dA_alpha", "dA_beta"), r.get("errors", ())))}
                for r in rec["rows"]]
        keys = ["p", "M", "dA_h", "dA_alpha", "dA_beta", "wall_time", "failed"]
        io.write_csv(out / "table3_airfoil.csv", keys, _table(rows, keys))
    else:
        mc = ex.duffing_mc_census(workers=opts.threads, seed=cfg.get("seed", 0))
        rec = {"branches": mc["branches"],
               "rows": [{k: v for k, v in r.items() if k != "result"} for r in mc["rows"]]}
        keys = ["M", "branch_0", "branch_1", "branch_2", "non_physical", "non_converged"]
        io.write_csv(out / "table_solution_details.csv", keys, _table(rec["rows"], keys))
    io.write_json(out / "bench.json", rec)
    print(f"bench {study}: {len(rec.get('rows', []))} cells")
    return rec


def cmd_integrate(cfg, out: Path, opts) -> dict:
    model = _model(cfg)
    fo = recast_to_first_order(model) if isinstance(model, StructuralModel) else model
    g = cfg.get("integrate", {})
    x0 = g.get("x0", [0.0] * fo.N)
    if len(x0) != fo.N:
        raise ConfigError(f"integrate/x0: expected {fo.N} values, got {len(x0)}")
    dt = g.get("dt") or default_dt(fo.frequencies)
    t_end = g.get("t_end", 2000.0)
    steps = int(round(t_end / dt))
    names = list(fo.state_names) or [f"x{i}" for i in range(fo.N)]
    if steps == 0:
        io.write_csv(out / "trajectory.csv", ["t"] + names, [])
        rec = {"dt": dt, "steps": 0, "window": [], "peaks": {}}
        io.write_json(out / "integrate.json", rec)
        return rec
    traj = rk4_integrate(fo, x0, dt, steps, store_every=g.get("store_every", 1))
    win = steady_window(traj, g.get("discard", 0.5))
    io.write_csv(out / "trajectory.csv", ["t"] + names,
                 np.column_stack([win.times, win.states]).tolist())
    peaks = {n: float(np.abs(win.states[:, i]).max()) for i, n in enumerate(names)}
    if g.get("spectrum", True):
        cols = []
        for i in range(fo.N):
            f, mag = amplitude_spectrum(win, i)
            cols.append(mag)
        io.write_csv(out / "spectrum.csv", ["frequency"] + names,
                     np.column_stack([f] + cols).tolist())
    rec = {"dt": dt, "steps": len(traj) - 1, "window": [float(win.times[0]), float(win.times[-1])],
           "peaks": peaks}
    io.write_json(out / "integrate.json", rec)
    print("peaks: " + "  ".join(f"{k}={v:.6g}" for k, v in peaks.items()))
    return rec


HANDLERS = {"plan": cmd_plan, "solve": cmd_solve, "aliasing": cmd_aliasing,
            "montecarlo": cmd_montecarlo, "bench": cmd_bench, "integrate": cmd_integrate}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rmhb", description="Multi-frequency harmonic balance runs.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON run configuration")
        s.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./rmhb_output)")
        s.add_argument("--seed", type=int, help="override the config seed")
        s.add_argument("--threads", type=int, default=1, help="worker threads for sampling runs")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        out = Path(args.out or cfg.get("output") or os.environ.get(OUTPUT_ENV, "rmhb_output"))
        t0 = time.perf_counter()
        try:
            HANDLERS[args.command](cfg, out, args)
        finally:
            io.write_json(out / "meta.json", _meta(cfg, args.command, time.perf_counter() - t0))
    except (ConfigError, ModelError, BasisError, PlanError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergence as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (IntegrationError, SingularJacobianError, StagnationError, FloatingPointError,
            MemoryError, np.linalg.LinAlgError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
