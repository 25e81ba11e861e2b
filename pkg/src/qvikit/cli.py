"""qvikit command line: run one configured experiment into a result bundle.

    qvikit <solve|stability|envelope|counterexample|control|verify>
           --config PATH --out DIR [--seed N] [--threads N]

Exit codes: 0 success, 2 an asserted invariant failed, 1 input/output or
configuration error. QVIKIT_LOG selects the log level (error, info, debug).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bundle import IoError, ResultBundle, import_grid_function, read_bundle, read_table
from .config import (
    ConfigValidationError,
    ExperimentConfig,
    FileForcing,
    ParseError,
    PatchForcing,
    load_config,
    parse_config,
    patch_labels,
)
from .control import (
    ControlProblemSpec,
    ObjectiveCache,
    coordinate_descent,
    grid_search,
    refinement_study,
)
from .errors import InvariantViolation, QVIError
from .order_lattice import MONOTONE_NOISE, GridFunction, leq_with_slack, order_violation
from .qvi import QVIInstance, multistart_fixed_points, solve_extremal, verify_solution
from .stability import (
    DECAY_FACTOR,
    DIRECTION_TOL,
    PerturbationPlan,
    run_envelope_perturbation,
    run_monotone_perturbation,
    run_scalar_counterexample,
)

log = logging.getLogger("qvikit")

SUBCOMMANDS = ("solve", "stability", "envelope", "counterexample", "control", "verify")
BRACKET_SLACK = 1e-8


# ------------------------------------------------------------ instances

def resolve_forcing(fc, grid, base_dir=".") -> np.ndarray:
    n = grid.size
    if fc.kind == "constant":
        return np.full(n, float(fc.value))
    if isinstance(fc, PatchForcing):
        lab = patch_labels(n, len(fc.values), fc.labels)
        return np.asarray(fc.values, dtype=float)[lab]
    if isinstance(fc, FileForcing):
        return import_grid_function(Path(base_dir) / fc.path, grid).values.copy()
    raise ValueError(f"unknown forcing kind {fc.kind!r}")


def build_instance(cfg: ExperimentConfig, f=None, F_cap=None) -> QVIInstance:
    grid = cfg.grid.build()
    base = getattr(cfg, "_base_dir", ".")
    if f is None:
        f = resolve_forcing(cfg.forcing, grid, base)
    if F_cap is None:
        F_cap = f if cfg.forcing_cap is None else resolve_forcing(cfg.forcing_cap, grid, base)
    return QVIInstance.build(grid, cfg.operator.build(), cfg.obstacle.build(), f, F_cap)


def build_plan(cfg: ExperimentConfig) -> tuple[QVIInstance, PerturbationPlan]:
    ex = cfg.experiment
    grid = cfg.grid.build()
    base = getattr(cfg, "_base_dir", ".")
    f_star = resolve_forcing(cfg.forcing, grid, base)
    F_cap = (ex.F_cap_factor * f_star if cfg.forcing_cap is None
             else resolve_forcing(cfg.forcing_cap, grid, base))
    plan = PerturbationPlan(f_star, ex.rule, ex.n_max, ex.n_start, ex.delta_scale, ex.nu, F_cap)
    return build_instance(cfg, f_star, F_cap), plan


def build_control(cfg: ExperimentConfig) -> ControlProblemSpec:
    ex = cfg.experiment
    grid = cfg.grid.build()
    labels = patch_labels(grid.size, ex.patches, ex.labels)
    nu, F = np.asarray(ex.nu), np.asarray(ex.F)
    template = build_instance(cfg, nu[labels], F[labels])
    return ControlProblemSpec(template, labels, nu, F, ex.objective, ex.target, ex.lam,
                              cfg.tolerances.outer)


# ------------------------------------------------------------ experiments

def _gf(values, grid) -> GridFunction:
    return GridFunction(values, grid)


def run_solve(cfg: ExperimentConfig, bundle: ResultBundle, seed: int) -> None:
    inst = build_instance(cfg)
    grid = inst.grid
    res = solve_extremal(inst, tol=cfg.tolerances.outer)
    checks = {name: verify_solution(inst, y, cfg.tolerances.residual)
              for name, y in (("y_min", res.y_min), ("y_max", res.y_max))}
    for name, rep in checks.items():
        if not rep.passed:
            raise InvariantViolation(f"{name} fails its residual check: {rep}")
    bundle.grid_functions.update(y_min=_gf(res.y_min, grid), y_max=_gf(res.y_max, grid),
                                 y_upper=_gf(res.interval.upper, grid),
                                 forcing=_gf(inst.f, grid), forcing_cap=_gf(inst.F_cap, grid))
    report = {
        "outer_iters": list(res.outer_iters), "residuals": list(res.residuals),
        "gap_sup": float(np.max(res.y_max - res.y_min, initial=0.0)),
        "verify": {k: vars(v) for k, v in checks.items()},
        "trace_from_below": res.trace[0], "trace_from_above": res.trace[1],
    }
    ex = cfg.experiment
    if ex.multistart:
        pts = multistart_fixed_points(inst, ex.multistart, seed, tol=cfg.tolerances.outer)
        outside = 0
        for i, z in enumerate(pts):
            bundle.grid_functions[f"multistart_{i:03d}"] = _gf(z, grid)
            outside += not (leq_with_slack(res.y_min, z, BRACKET_SLACK)
                            and leq_with_slack(z, res.y_max, BRACKET_SLACK))
        report["multistart"] = {"starts": ex.multistart, "distinct": len(pts), "outside": outside}
        if outside:
            raise InvariantViolation(f"{outside} multistart fixed points outside [y_min, y_max]")
    bundle.reports["solve"] = report


def _stability_payload(bundle: ResultBundle, rep, grid) -> None:
    bundle.tables["errors"] = rep.table()
    bundle.grid_functions["m_star"] = _gf(rep.reference["m"], grid)
    bundle.grid_functions["M_star"] = _gf(rep.reference["M"], grid)
    for key, sols in rep.solutions.items():
        for n, y in zip(rep.ns, sols):
            bundle.grid_functions[f"{key}_{n:03d}"] = _gf(y, grid)
    bundle.reports["stability"] = {
        "rule": rep.rule, "ns": rep.ns, "decay_ratios": rep.decay_ratios,
        "decay_factor_required": DECAY_FACTOR, "decay_ok": rep.decay_ok,
        "worst_direction_violation": rep.worst_direction_violation,
        "worst_sandwich_violation": rep.worst_sandwich_violation,
        "hypotheses": rep.hypotheses,
    }
    bundle.passed = rep.decay_ok


def run_stability(cfg: ExperimentConfig, bundle: ResultBundle, seed: int) -> None:
    inst, plan = build_plan(cfg)
    if cfg.experiment.kind == "envelope":
        rep = run_envelope_perturbation(inst, plan, tol=cfg.tolerances.outer)
    else:
        rep = run_monotone_perturbation(inst, plan, tol=cfg.tolerances.outer, seed=seed)
    _stability_payload(bundle, rep, inst.grid)


def run_counterexample(cfg: ExperimentConfig, bundle: ResultBundle, seed: int) -> None:
    ex = cfg.experiment
    rep = run_scalar_counterexample(ex.a, ex.b, ex.n_list)
    bundle.tables["counterexample"] = [vars(r) for r in rep.rows]
    bundle.reports["counterexample"] = {
        "a": rep.a, "b": rep.b, "m_T": rep.m_T, "M_T": rep.M_T,
        "minimal_converges": rep.minimal_converges,
        "maximal_converges": rep.maximal_converges,
        "sharpness_observed": rep.sharpness_observed,
    }
    bundle.passed = rep.passed


def run_control(cfg: ExperimentConfig, bundle: ResultBundle, seed: int) -> None:
    spec = build_control(cfg)
    search = cfg.experiment.search
    cache = ObjectiveCache(spec)
    gs = grid_search(spec, search.grid_points, cache=cache)
    best = gs
    report = {"grid_search": {"argmin": gs.argmin, "value": gs.value,
                              "certificate": gs.certificate, "evaluations": gs.evaluations}}
    bundle.tables["objective_table"] = [
        {**{f"theta_{i}": t for i, t in enumerate(th)}, "J": v} for th, v in gs.table]
    if search.coordinate_descent is not None:
        cd_cfg = search.coordinate_descent
        cd = coordinate_descent(spec, gs.argmin, cd_cfg.tol_J, cd_cfg.max_rounds,
                                cd_cfg.xtol_rel, cache=cache)
        report["coordinate_descent"] = {"argmin": cd.argmin, "value": cd.value,
                                        "rounds_trace": cd.trace}
        bundle.tables["descent_trace"] = [{"step": i, "J": v} for i, v in enumerate(cd.trace)]
        if cd.value <= best.value:
            best = cd
    if search.refinement_levels:
        wp = refinement_study(spec, search.refinement_levels, cache=cache)
        report["refinement"] = vars(wp)
        bundle.passed = wp.nonincreasing and wp.argmins_in_box
    ob = best.best
    report["optimum"] = {"theta": ob.theta, "total": ob.total, "gap": ob.gap,
                         "tracking": ob.tracking, "control_cost": ob.control_cost}
    grid = spec.template.grid
    bundle.grid_functions.update(y_min=_gf(ob.y_min, grid), y_max=_gf(ob.y_max, grid))
    bundle.reports["control"] = report


RUNNERS = {"solve": run_solve, "stability": run_stability, "envelope": run_stability,
           "counterexample": run_counterexample, "control": run_control}


def run(cfg: ExperimentConfig, out_dir, seed: int | None = None,
        threads: int | None = None) -> ResultBundle:
    """Run the configured experiment and write its bundle; returns the bundle."""
    seed = cfg.seed if seed is None else seed
    echo = cfg.model_dump(mode="json")
    echo["seed"] = seed
    bundle = ResultBundle(echo)
    t0 = time.perf_counter()
    RUNNERS[cfg.kind](cfg, bundle, seed)
    bundle.provenance = {"code_version": __version__, "seed": seed, "threads": threads,
                         "wall_time_s": round(time.perf_counter() - t0, 3)}
    bundle.write(out_dir)
    return bundle


# ------------------------------------------------------------ verify

def verify_bundle(out_dir) -> list[str]:
    """Re-check a bundle's invariants from its CSV payloads; returns failures."""
    out = Path(out_dir)
    doc = read_bundle(out)
    cfg = parse_config(json.dumps(doc["config_echo"]))
    fails: list[str] = []
    kind = cfg.kind

    def gf(name):
        return import_grid_function(out / f"{name}.csv", cfg.grid.build()).values

    if kind == "solve":
        inst = build_instance(cfg, gf("forcing"), gf("forcing_cap"))
        lo, hi = gf("y_min"), gf("y_max")
        if not leq_with_slack(lo, hi, MONOTONE_NOISE):
            fails.append(f"y_min exceeds y_max by {order_violation(lo, hi):.3e}")
        for name, y in (("y_min", lo), ("y_max", hi)):
            rep = verify_solution(inst, y, cfg.tolerances.residual)
            if not rep.passed:
                fails.append(f"{name} residuals {vars(rep)}")
        for name in doc["grid_functions"]:
            if name.startswith("multistart_"):
                z = gf(name)
                if not (leq_with_slack(lo, z, BRACKET_SLACK) and leq_with_slack(z, hi, BRACKET_SLACK)):
                    fails.append(f"{name} outside [y_min, y_max]")
    elif kind in ("stability", "envelope"):
        ns = doc["reports"]["stability"]["ns"]
        seqs = {k: [gf(f"{k}_{n:03d}") for n in ns] for k in ("m", "M")}
        ref = {"m": gf("m_star"), "M": gf("M_star")}
        if kind == "stability":
            sign = -1.0 if cfg.experiment.rule == "decreasing" else 1.0
            for k, seq in seqs.items():
                for a, b in zip(seq, seq[1:]):
                    gap = order_violation(a, b) if sign > 0 else order_violation(b, a)
                    if gap > DIRECTION_TOL:
                        fails.append(f"{k} sequence breaks its monotone direction by {gap:.3e}")
                        break
        else:
            for k in ("m", "M"):
                lo_s = [gf(f"{k}_lo_{n:03d}") for n in ns]
                hi_s = [gf(f"{k}_hi_{n:03d}") for n in ns]
                for n, a, b, c in zip(ns, lo_s, seqs[k], hi_s):
                    gap = max(order_violation(a, b), order_violation(b, c))
                    if gap > DIRECTION_TOL:
                        fails.append(f"{k} sandwich broken at n={n} by {gap:.3e}")
        for k, seq in seqs.items():
            e = [float(np.max(np.abs(y - ref[k]), initial=0.0)) for y in seq]
            if e[0] > 0 and e[-1] * DECAY_FACTOR > e[0]:
                fails.append(f"{k} sup error decays only {e[0] / max(e[-1], 1e-300):.2f}x")
    elif kind == "counterexample":
        ex = cfg.experiment
        for row in read_table(out / "counterexample.csv"):
            if not (row["m_R"] == row["M_R"] == ex.a and row["m_U"] == row["M_U"] == ex.b):
                fails.append(f"counterexample row n={int(row['n'])} differs from (a, a, b, b)")
    elif kind == "control":
        table = read_table(out / "objective_table.csv")
        best = min(r["J"] for r in table)
        if doc["reports"]["control"]["grid_search"]["value"] != best:
            fails.append("grid-search minimum is not the smallest tabulated value")
        if (out / "descent_trace.csv").is_file():
            trace = [r["J"] for r in read_table(out / "descent_trace.csv")]
            if any(b > a for a, b in zip(trace, trace[1:])):
                fails.append("descent trace increases")
        lo, hi = gf("y_min"), gf("y_max")
        if not leq_with_slack(lo, hi, MONOTONE_NOISE):
            fails.append("y_min exceeds y_max at the optimum")
    return fails


# ------------------------------------------------------------ entry point

def _configure_logging() -> None:
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("QVIKIT_LOG", "error").lower(), logging.ERROR)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    log.setLevel(level)


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qvikit", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--config", help="experiment JSON (optional for verify)")
    p.add_argument("--out", required=True, help="bundle directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    _configure_logging()
    if args.threads:
        import numba
        numba.set_num_threads(max(1, min(args.threads, numba.config.NUMBA_NUM_THREADS)))
    try:
        if args.command == "verify":
            fails = verify_bundle(args.out)
            for f in fails:
                print(f"FAIL {f}", file=sys.stderr)
            print("verify: ok" if not fails else f"verify: {len(fails)} failure(s)")
            return 2 if fails else 0
        if not args.config:
            print("error: --config is required", file=sys.stderr)
            return 1
        cfg = load_config(args.config)
        if cfg.kind != args.command:
            print(f"error: config describes a {cfg.kind!r} experiment, not {args.command!r}",
                  file=sys.stderr)
            return 1
        bundle = run(cfg, args.out, args.seed, args.threads)
        print(f"{args.command}: wrote {args.out} ({'passed' if bundle.passed else 'FAILED'})")
        return 0 if bundle.passed else 2
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return 2
    except (ParseError, ConfigValidationError, IoError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except QVIError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
