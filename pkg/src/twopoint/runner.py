"""Experiment pipeline: geometry -> equation -> barrier -> solver -> checks.

Exit status: 0 all requested checks pass, 1 some check failed, 2 the
configuration or a hypothesis is invalid, 3 the numerics diverged.
"""
from __future__ import annotations

import json
import logging
import math
import os
from pathlib import Path

import numpy as np

from . import reports
from .barrier import (Barrier, parse_expression, solve_barrier, to_csv, verify_condition,
                      _vectorize)
from .config import INITIAL_VARIABLES, ExperimentConfig
from .errors import RangeError, TwoPointError
from .geometry import curvature_bounds
from .reports import SummaryRow
from .solver import ScalarField, evolve
from .verify import (LiYauParams, epsilon_sensitivity, gradient_check, initial_containment,
                     liyau_check, two_point_check)

log = logging.getLogger(__name__)

OUTPUT_ENV = "TWOPOINT_OUTPUT_DIR"
EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3


def output_dir(cfg: ExperimentConfig, override=None) -> Path:
    return Path(override or os.environ.get(OUTPUT_ENV) or cfg.output.dir)


def snapshot_times(cfg: ExperimentConfig):
    return np.linspace(0.0, cfg.time.t_end, cfg.time.snapshots + 1)


def initial_field(cfg: ExperimentConfig, geom) -> ScalarField:
    variables = INITIAL_VARIABLES[geom.family]
    expr, syms = parse_expression(cfg.initial_expression, variables)
    return ScalarField.from_function(geom, cfg.grid.n, _vectorize(expr, syms))


def build_barrier(cfg: ExperimentConfig, geom, fam) -> Barrier:
    """Barrier on ``[0, s_max]`` with time nodes at the snapshot times.

    ``s_max`` defaults to the diameter when a psi-form check is requested and
    to half of it otherwise (the modulus form evaluates phi at d / 2).
    """
    b = cfg.barrier
    s_max = b.s_max
    if s_max is None:
        s_max = geom.diameter if cfg.wants_psi else geom.diameter / 2
    times = snapshot_times(cfg)
    if b.mode == "analytic":
        return Barrier.from_expression(b.phi, s_max, times, n_s=b.n_s)
    s_grid = np.linspace(0.0, s_max, b.n_s)
    expr, syms = parse_expression(b.phi0, ("s",))
    phi0 = _vectorize(expr, syms)(s_grid)
    bounds = curvature_bounds(geom, (0.0, cfg.time.t_end))
    return solve_barrier(fam, bounds, phi0, b.delta, times, s_grid, c_cfl=cfg.time.c_cfl)


def _write_error(out: Path, exc: Exception, code: int) -> None:
    out.mkdir(parents=True, exist_ok=True)
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    value = getattr(exc, "value", None)
    if value is not None:
        record["value"] = value
    (out / "error.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def run_experiment(cfg: ExperimentConfig, threads: int = 1, out=None) -> int:
    """Run every requested check, write CSVs, return the exit status."""
    out = output_dir(cfg, out)
    try:
        return _run(cfg, threads, out)
    except TwoPointError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        _write_error(out, exc, exc.exit_code)
        return exc.exit_code


def _run(cfg: ExperimentConfig, threads: int, out: Path) -> int:
    geom = cfg.make_geometry()
    fam = cfg.make_family()
    run = cfg.checks.run
    tol = cfg.tolerances
    summary = []
    hypotheses_ok = True
    barrier = None

    if cfg.needs_barrier:
        barrier = build_barrier(cfg, geom, fam)
        bounds = curvature_bounds(geom, (0.0, cfg.time.t_end))
        cond = verify_condition(barrier, fam, cfg.condition_mode, bounds, cfg.barrier.margin)
        reports.emit_report(cond, out / "barrier_condition.csv")
        summary.append(SummaryRow("barrier_condition", cond.passed, cond.worst_residual,
                                  cond.margin))
        hypotheses_ok &= cond.passed

    u0 = initial_field(cfg, geom)
    forms = [f for f, wanted in (("psi_form", cfg.wants_psi),
                                 ("modulus_form", cfg.wants_modulus)) if wanted]
    if "containment" in run and not forms:
        forms = ["psi_form"]
    for form in forms:
        name = f"containment_{form}"
        if not hypotheses_ok:
            summary.append(SummaryRow(name, None, None, None))
            continue
        try:
            rep = initial_containment(u0, barrier, form, tol=tol.containment, threads=threads)
        except RangeError as exc:
            # u0 leaves the range of the barrier: the hypothesis fails outright
            log.warning("%s: %s", name, exc)
            summary.append(SummaryRow(name, False, math.inf, tol.containment))
            hypotheses_ok = False
            continue
        reports.emit_report(rep, out / f"{name}.csv")
        summary.append(SummaryRow(name, rep.passed, rep.global_worst, rep.tol))
        hypotheses_ok &= rep.passed

    traj = None
    if hypotheses_ok or "liyau" in run:
        traj = evolve(u0, fam, cfg.time.t_end, snapshot_times(cfg)[1:], c_cfl=cfg.time.c_cfl)
        log.info("evolved %d steps, dt_max=%g", traj.n_steps, traj.dt_max)

    for name in run:
        if name in ("containment", "barrier_condition"):
            continue
        if name == "liyau":
            params = LiYauParams.for_trajectory(traj, cfg.liyau.alpha_ly)
            rep = liyau_check(traj, params, tol=tol.liyau, t_min=cfg.liyau.t_min)
            reports.emit_report(rep, out / "liyau.csv")
            summary.append(SummaryRow("liyau", rep.passed, rep.worst, rep.tol))
            continue
        if not hypotheses_ok:
            summary.append(SummaryRow(name, None, None, None))
            continue
        if name in ("two_point_psi", "two_point_modulus"):
            mode = "psi_form" if name == "two_point_psi" else "modulus_form"
            rep = two_point_check(traj, barrier, mode, tol=tol.two_point, threads=threads)
            reports.emit_report(rep, out / f"{name}.csv")
            summary.append(SummaryRow(name, rep.passed, rep.global_worst, rep.tol))
        else:
            rep = gradient_check(traj, barrier, name[len("grad_"):], tol_ratio=tol.ratio)
            reports.emit_report(rep, out / f"{name}.csv")
            summary.append(SummaryRow(name, rep.passed, rep.worst, 1.0 + rep.tol))

    if cfg.equation.eps_sweep and "two_point_modulus" in run and hypotheses_ok:
        rows, spread = epsilon_sensitivity(
            u0, fam, cfg.time.t_end, snapshot_times(cfg)[1:], cfg.equation.eps_sweep,
            lambda f: build_barrier(cfg, geom, f), threads=threads, c_cfl=cfg.time.c_cfl)
        reports.emit_table(("epsilon_reg", "worst", "final_worst"), rows,
                           out / "eps_sensitivity.csv")
        summary.append(SummaryRow("eps_sensitivity", spread < tol.eps_spread, spread,
                                  tol.eps_spread))

    reports.emit_report(summary, out / "summary.csv")
    ok = all(r.passed for r in summary)
    return EXIT_PASS if ok else EXIT_FAIL


def run_barrier(cfg: ExperimentConfig, action: str, out=None) -> int:
    """``barrier check`` verifies the configured barrier; ``solve`` exports it."""
    out = output_dir(cfg, out)
    try:
        geom = cfg.make_geometry()
        fam = cfg.make_family()
        barrier = build_barrier(cfg, geom, fam)
        if action == "solve":
            out.mkdir(parents=True, exist_ok=True)
            to_csv(barrier, out / "barrier.csv")
            return EXIT_PASS
        bounds = curvature_bounds(geom, (0.0, cfg.time.t_end))
        cond = verify_condition(barrier, fam, cfg.condition_mode, bounds, cfg.barrier.margin)
        reports.emit_report(cond, out / "barrier_condition.csv")
        reports.emit_report([SummaryRow("barrier_condition", cond.passed, cond.worst_residual,
                                        cond.margin)], out / "summary.csv")
        return EXIT_PASS if cond.passed else EXIT_FAIL
    except TwoPointError as exc:
        _write_error(out, exc, exc.exit_code)
        return exc.exit_code


__all__ = ["run_experiment", "run_barrier", "build_barrier", "initial_field",
           "snapshot_times"]
