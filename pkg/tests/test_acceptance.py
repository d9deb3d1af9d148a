"""Acceptance criteria A1-A8, each at its stated tolerance."""
import csv
import math
import time

import numpy as np

from twopoint.barrier import Barrier
from twopoint.cli import main
from twopoint.config import parse_config
from twopoint.equations import CoefficientFamily
from twopoint.geometry import (Geometry, curvature_bounds, distance, metric_at, ricci_at,
                               supersolution_residual)
from twopoint.runner import run_experiment
from twopoint.solver import ScalarField, evolve, step
from twopoint.verify import LiYauParams, liyau_check, liyau_rhs, two_point_check

HEAT = CoefficientFamily("heat")


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def run(text, out):
    cfg = parse_config(text)
    start = time.perf_counter()
    code = run_experiment(cfg, threads=1, out=out)
    return code, time.perf_counter() - start


A1 = """
[geometry]
family = circle
length = 2*pi
[equation]
family = heat
[grid]
n = 256
[initial]
u0 = sin(x)
[time]
t_end = 0.5
snapshots = 10
[barrier]
mode = analytic
phi = 2*s - pi
condition = parabolic_eq16
[checks]
run = containment, barrier_condition, two_point_psi, grad_cor15
[tolerances]
two_point = 1e-3
"""


def test_a1_psi_form_flat_circle(tmp_path, criterion):
    code, elapsed = run(A1, tmp_path)
    worst = max(float(r["worst"]) for r in read_csv(tmp_path / "two_point_psi.csv"))
    summary = {r["check"]: r["pass"] for r in read_csv(tmp_path / "summary.csv")}
    ok = code == 0 and worst <= 1e-3 and elapsed < 10 and summary["barrier_condition"] == "true"
    assert criterion("A1", ok, f"exit={code} worst Z={worst:.3g} time={elapsed:.2f}s")


A2 = """
[geometry]
family = circle
[equation]
family = heat
[grid]
n = 256
[initial]
u0 = sin(x)
[time]
t_end = 0.5
snapshots = 10
[barrier]
mode = solve
phi0 = 1.2*sin(s)
s_max = pi/2
delta = 0
[checks]
run = containment, barrier_condition, two_point_modulus, grad_cor17
[tolerances]
two_point = 1e-3
ratio = 0.02
"""


def test_a2_modulus_form_flat_circle(tmp_path, criterion):
    code, _ = run(A2, tmp_path)
    worst = max(float(r["worst"]) for r in read_csv(tmp_path / "two_point_modulus.csv"))
    ratio = max(float(r["ratio"]) for r in read_csv(tmp_path / "grad_cor17.csv"))
    ok = code == 0 and worst <= 1e-3 and ratio <= 1.02
    assert criterion("A2", ok, f"exit={code} worst C={worst:.3g} cor17 ratio={ratio:.4f}")


A3 = """
[geometry]
family = circle
[equation]
family = p_laplacian
p = 3
eps_sweep = 1e-4, 1e-6, 1e-8
[grid]
n = 256
[initial]
u0 = sin(x)
[time]
t_end = 0.2
snapshots = 10
[barrier]
mode = solve
phi0 = 1.2*sin(s)
s_max = pi/2
delta = 1e-3
[checks]
run = containment, barrier_condition, two_point_modulus
[tolerances]
two_point = 2e-3
eps_spread = 10
"""


def test_a3_degenerate_diffusion(tmp_path, criterion):
    code, _ = run(A3, tmp_path)
    worst = max(float(r["worst"]) for r in read_csv(tmp_path / "two_point_modulus.csv"))
    sweep = read_csv(tmp_path / "eps_sensitivity.csv")
    finals = np.abs([float(r["final_worst"]) for r in sweep])
    spread = 1.0 if np.all(finals == finals[0]) else np.max(finals) / np.min(finals)
    ok = code == 0 and worst <= 2e-3 and len(sweep) == 3 and spread < 10
    assert criterion("A3", ok, f"exit={code} worst C={worst:.3g} eps spread={spread:.3g}")


def test_a4_exact_ricci_flow(rng, criterion):
    geom = Geometry("sphere_shrinking", r0=1.0)
    pts = np.stack([rng.uniform(0, np.pi, 1000), rng.uniform(-np.pi, np.pi, 1000)], axis=-1)
    t = rng.uniform(0, 0.49, 1000)
    resid = float(np.max(np.abs(supersolution_residual(geom, pts, t))))
    # g(t) is affine in t, so its centered difference is exact up to rounding
    p, t0 = pts[:50], 0.2
    fd_err = 0.0
    for h in (0.1, 0.05, 0.025):
        rate = (metric_at(geom, p, t0 + h) - metric_at(geom, p, t0 - h)) / (2 * h)
        fd_err = max(fd_err, float(np.max(np.abs(rate + 2 * ricci_at(geom, p, t0)))))
    # first variation of length: d/dt d_t(x, y) = -Ric(T, T) d_t = -d_t / r(t)^2
    x, y = pts[:100], pts[100:200]
    d0 = distance(geom, x, y, t0)
    exact = -d0 / geom.radius_sq(t0)
    errs = []
    for h in (0.04, 0.02, 0.01):
        fd = (distance(geom, x, y, t0 + h) - distance(geom, x, y, t0 - h)) / (2 * h)
        errs.append(float(np.max(np.abs(fd - exact))))
    order = min(math.log2(errs[0] / errs[1]), math.log2(errs[1] / errs[2]))
    ok = resid <= 1e-12 and fd_err <= 1e-12 and order >= 1.9
    assert criterion("A4", ok, f"residual={resid:.2g} metric FD err={fd_err:.2g} "
                               f"observed order={order:.3f}")


def test_a5_liyau_shrinking_sphere(criterion):
    geom = Geometry("sphere_shrinking", r0=1.0)
    bounds = curvature_bounds(geom, (0.0, 0.375))
    u0 = ScalarField.from_function(geom, 256, lambda th: 2 + np.cos(th))
    traj = evolve(u0, HEAT, 0.375, np.linspace(0.05, 0.375, 14))
    params = LiYauParams.for_trajectory(traj, 2.0)
    rep = liyau_check(traj, params, tol=0.0, t_min=0.05)
    rhs_value = float(liyau_rhs(LiYauParams(2.0, 0.0, 1.0, 2), 1.0))
    ok = (rep.worst < 0 and abs(rhs_value - 19.3137085) <= 1e-6 and bounds.K0 == 0
          and abs(bounds.K1 - 4) < 1e-12 and params.K1 == bounds.K1
          and min(rep.table["t"]) >= 0.05)
    assert criterion("A5", ok, f"max(LHS-RHS)={rep.worst:.4g} RHS(2,2,0,1,1)={rhs_value:.7f} "
                               f"K1={bounds.K1:g}")


def loop_heat_step(u, h, dt):
    n = len(u)
    return [u[i] + dt * ((u[(i + 1) % n] - 2 * u[i] + u[i - 1]) / (h * h)) for i in range(n)]


def closed_form_error(n, t=0.1):
    f = ScalarField.from_function(Geometry("circle"), n, np.sin)
    g = evolve(f, HEAT, t).snapshots[-1]
    return float(np.max(np.abs(g.values - math.exp(-t) * np.sin(g.grid.axes[0]))))


def test_a6_solver_oracle(criterion):
    f = ScalarField.from_function(Geometry("circle"), 32, np.sin)
    h = 2 * math.pi / 32
    dt = 0.4 * h * h / 2
    ref = list(f.values)
    worst = 0.0
    for _ in range(100):
        f = step(f, HEAT, dt)
        ref = loop_heat_step(ref, h, dt)
        worst = max(worst, float(np.max(np.abs(f.values - ref))))
    errs = [closed_form_error(n) for n in (32, 64, 128)]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    ok = worst <= 1e-12 and min(ratios) >= 3.5
    assert criterion("A6", ok, f"oracle max diff={worst:.2g} convergence ratios="
                               f"{ratios[0]:.3f},{ratios[1]:.3f}")


def loop_modulus_worst(u, xs, length):
    """Every ordered pair, kernel 2 phi(d / 2) for phi = 2 s."""
    best = None
    for i in range(len(u)):
        for j in range(len(u)):
            d = abs(xs[j] - xs[i]) % length
            d = min(d, length - d)
            v = u[j] - u[i] - 2.0 * (2 * (0.5 * d))
            if best is None or v > best[0]:
                best = (v, i, j)
    return best


def test_a7_checker_faithfulness(rng, tmp_path, criterion):
    geom = Geometry("circle")
    b = Barrier.from_expression("2*s", math.pi / 2, [0.0, 0.05])
    mismatches, runs = 0, 0
    for _ in range(5):
        a = rng.normal(size=(4, 2))
        u0 = ScalarField.from_function(
            geom, 64, lambda x: sum(c * np.cos(k * x) + s * np.sin(k * x)
                                    for k, (c, s) in enumerate(a, 1)))
        traj = evolve(u0, HEAT, 0.05, [0.025])
        one = two_point_check(traj, b, "modulus_form", threads=1)
        four = two_point_check(traj, b, "modulus_form", threads=4)
        for k, snap in enumerate(traj.snapshots):
            runs += 1
            expected = loop_modulus_worst(list(snap.values), list(snap.grid.axes[0]), 2 * math.pi)
            for rep in (one, four):
                if (rep.worst[k], *rep.pairs[k]) != expected:
                    mismatches += 1
    outputs = []
    cfg = tmp_path / "a7.ini"
    cfg.write_text(A1.replace("n = 256", "n = 64"))
    for threads in (1, 4):
        out = tmp_path / f"t{threads}"
        code = run_experiment(parse_config(cfg.read_text()), threads=threads, out=out)
        outputs.append((code, {p.name: p.read_bytes() for p in out.iterdir()}))
    cli_same = outputs[0] == outputs[1]
    ok = mismatches == 0 and cli_same
    assert criterion("A7", ok, f"{runs} snapshots x 2 thread counts, mismatches={mismatches}, "
                               f"CSV identical across threads={cli_same}")


def test_a8_hypothesis_guards(tmp_path, monkeypatch, criterion):
    monkeypatch.chdir(tmp_path)
    psi = tmp_path / "psi.ini"
    psi.write_text("[equation]\nfamily = p_laplacian\np = 3\nform = eq_1_4\n"
                   "[checks]\nrun = two_point_psi\n[output]\ndir = psi_out\n")
    horizon = tmp_path / "horizon.ini"
    horizon.write_text("[geometry]\nfamily = sphere_shrinking\nr0 = 1\n[time]\nt_end = 0.5\n"
                       "[output]\ndir = horizon_out\n")
    codes = [main(["run", str(psi)]), main(["run", str(horizon)])]
    written = sorted(p.name for d in ("psi_out", "horizon_out") for p in (tmp_path / d).iterdir())
    messages = [(tmp_path / d / "error.json").read_text() for d in ("psi_out", "horizon_out")]
    ok = (codes == [2, 2] and written == ["error.json", "error.json"]
          and "\\u03b2(t) \\u2265 1 required" in messages[0] and "horizon" in messages[1])
    assert criterion("A8", ok, f"exit codes={codes}, files={written}")
