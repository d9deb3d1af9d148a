"""Brute-force checks of two-point estimates on solver trajectories.

Two-point functions, for nodes ``x`` and ``y`` at time ``t``:

* psi form      ``Z = Psi(u(y), t) - Psi(u(x), t) - d_t(x, y)``
* modulus form  ``C = u(y) - u(x) - 2 phi(d_t(x, y) / 2, t)``

The estimates claim both are ``<= 0`` for all pairs.  The pair loop visits
unordered pairs ``i <= j`` once and evaluates both orientations; row blocks
are farmed out to a thread pool and reduced with a fixed tie-break (largest
value, then lexicographically smallest ``(x_index, y_index)``), so the
result does not depend on the number of workers.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math

import numpy as np

from .barrier import Barrier, eval_barrier, invert
from .equations import CoefficientFamily
from .errors import HypothesisError, ParameterError, PositivityError
from .geometry import curvature_bounds, distance
from .solver import DEFAULT_CFL, ScalarField, Trajectory, evolve, gradient_norm, laplacian

TWO_POINT_MODES = ("psi_form", "modulus_form")
GRADIENT_MODES = ("cor15", "cor17")
DEFAULT_TOL_RATIO = 0.02
_BLOCK_ELEMENTS = 1 << 18


@dataclass(frozen=True, eq=False)
class TwoPointReport:
    mode: str
    times: np.ndarray
    worst: np.ndarray
    pairs: list
    tol: float
    passed: bool

    @property
    def global_worst(self) -> float:
        return float(np.max(self.worst))

    @property
    def global_index(self) -> int:
        return int(np.argmax(self.worst))


@dataclass(frozen=True, eq=False)
class CheckReport:
    name: str
    columns: tuple
    table: dict
    worst: float
    location: tuple
    tol: float
    passed: bool
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class LiYauParams:
    """Harnack parameter and curvature data for the Li-Yau bound."""

    alpha_ly: float
    K0: float
    K1: float
    n: int

    def __post_init__(self):
        if not self.alpha_ly > 1:
            raise ParameterError("alpha_ly must exceed 1")

    @classmethod
    def for_trajectory(cls, traj: Trajectory, alpha_ly: float):
        geom = traj.grid.geom
        b = curvature_bounds(geom, (0.0, float(traj.times[-1])))
        return cls(alpha_ly, b.K0, b.K1, geom.dimension)


def liyau_rhs(params: LiYauParams, t):
    """``n a^2 / t + n a^3 K0 / (a - 1) + n^{3/2} a^2 (K0 + K1)``."""
    a, n = params.alpha_ly, params.n
    return (n * a * a / np.asarray(t, dtype=float)
            + n * a ** 3 * params.K0 / (a - 1)
            + n ** 1.5 * a * a * (params.K0 + params.K1))


# -- hypothesis guards ---------------------------------------------------------

def check_hypotheses(fam: CoefficientFamily, geom, mode: str) -> None:
    """Refuse experiments whose hypotheses fail structurally."""
    if mode not in TWO_POINT_MODES + GRADIENT_MODES:
        raise ValueError(f"unknown check mode {mode!r}")
    if mode in ("psi_form", "cor15"):
        fam.require_time_only_beta()
        if curvature_bounds(geom, (0.0, 0.0)).K0 > 0:
            raise HypothesisError("Ric >= 0 required for the psi-form estimate")


def default_tolerance(traj: Trajectory, mode: str) -> float:
    """``10 (h + dt) L`` with ``L`` the initial Lipschitz scale."""
    u0 = traj.snapshots[0]
    h = u0.grid.metric_spacing(u0.t)
    scale = 1.0
    if mode == "modulus_form":
        scale = max(1.0, float(np.max(gradient_norm(u0))))
    return 10.0 * (h + traj.dt_max) * scale


# -- pair loop -----------------------------------------------------------------

def _better(a, b):
    """Pick the winner of two ``(value, x, y)`` candidates."""
    if b is None:
        return a
    if a is None:
        return b
    if a[0] != b[0]:
        return a if a[0] > b[0] else b
    return min(a, b, key=lambda c: (c[1], c[2]))


def _block_worst(lo, hi, values, points, geom, t, kernel):
    n = len(values)
    rows = np.arange(lo, hi)
    d = distance(geom, points[lo:hi, None], points[None, :], t)
    penalty = kernel(d)
    fwd = values[None, :] - values[lo:hi, None] - penalty    # x = i, y = j
    rev = values[lo:hi, None] - values[None, :] - penalty    # x = j, y = i
    upper = np.arange(n)[None, :] >= rows[:, None]
    fwd = np.where(upper, fwd, -np.inf)
    rev = np.where(upper, rev, -np.inf)
    m = max(np.max(fwd), np.max(rev))
    cands = []
    ii, jj = np.nonzero(fwd == m)
    if len(ii):
        k = np.lexsort((jj, ii))[0]
        cands.append((float(m), int(ii[k] + lo), int(jj[k])))
    ii, jj = np.nonzero(rev == m)
    if len(ii):
        x, y = jj, ii + lo
        k = np.lexsort((y, x))[0]
        cands.append((float(m), int(x[k]), int(y[k])))
    best = None
    for c in cands:
        best = _better(c, best)
    return best


def pair_worst(values, points, geom, t, kernel, threads: int = 1):
    """Maximum over ordered node pairs of ``v[y] - v[x] - kernel(d(x, y))``.

    Returns ``(value, x_index, y_index)``.
    """
    values = np.asarray(values, dtype=float).ravel()
    points = np.asarray(points, dtype=float)
    n = len(values)
    rows = max(1, _BLOCK_ELEMENTS // max(n, 1))
    blocks = [(lo, min(n, lo + rows)) for lo in range(0, n, rows)]
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(
                lambda b: _block_worst(b[0], b[1], values, points, geom, t, kernel), blocks))
    else:
        parts = [_block_worst(lo, hi, values, points, geom, t, kernel) for lo, hi in blocks]
    best = None
    for p in parts:
        best = _better(p, best)
    return best


def _snapshot_terms(snap: ScalarField, b: Barrier, mode: str):
    t = snap.t
    if mode == "psi_form":
        return invert(b, snap.values.ravel(), t), (lambda d: d)
    return snap.values.ravel(), (lambda d: 2.0 * eval_barrier(b, 0.5 * d, t)[0])


def _two_point(snapshots, b, mode, tol, threads):
    if mode not in TWO_POINT_MODES:
        raise ValueError(f"unknown two-point mode {mode!r}")
    times, worst, pairs = [], [], []
    for snap in snapshots:
        values, kernel = _snapshot_terms(snap, b, mode)
        w, xi, yi = pair_worst(values, snap.grid.points, snap.geom, snap.t, kernel, threads)
        times.append(snap.t)
        worst.append(w)
        pairs.append((xi, yi))
    worst = np.array(worst)
    return TwoPointReport(mode, np.array(times), worst, pairs, float(tol),
                          bool(np.max(worst) <= tol))


def initial_containment(u0: ScalarField, b: Barrier, mode: str, tol: float = 1e-12,
                        threads: int = 1) -> TwoPointReport:
    """Two-point function at the initial time (the estimates' hypothesis)."""
    return _two_point([u0], b, mode, tol, threads)


def two_point_check(traj: Trajectory, b: Barrier, mode: str, tol: float | None = None,
                    threads: int = 1) -> TwoPointReport:
    """Worst two-point value at every snapshot of ``traj``."""
    check_hypotheses(traj.family, traj.grid.geom, mode)
    if tol is None:
        tol = default_tolerance(traj, mode)
    return _two_point(traj.snapshots, b, mode, tol, threads)


def gradient_check(traj: Trajectory, b: Barrier, mode: str,
                   tol_ratio: float = DEFAULT_TOL_RATIO) -> CheckReport:
    """Compare ``|Du|`` with the gradient bound at every node and snapshot.

    ``cor15`` bounds by ``phi'(Psi(u, t), t)``, ``cor17`` by ``phi'(0, t)``.
    """
    if mode not in GRADIENT_MODES:
        raise ValueError(f"unknown gradient mode {mode!r}")
    check_hypotheses(traj.family, traj.grid.geom, mode)
    cols = {k: [] for k in ("t", "node", "grad", "bound", "ratio")}
    for snap in traj.snapshots:
        grad = gradient_norm(snap).ravel()
        if mode == "cor15":
            bound = eval_barrier(b, invert(b, snap.values.ravel(), snap.t), snap.t)[1]
        else:
            bound = np.full(grad.shape, float(eval_barrier(b, 0.0, snap.t)[1]))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(grad == 0, 0.0, grad / np.where(bound > 0, bound, 0.0))
        ratio = np.where((bound <= 0) & (grad > 0), np.inf, ratio)
        cols["t"].append(np.full(grad.shape, snap.t))
        cols["node"].append(np.arange(grad.size))
        cols["grad"].append(grad)
        cols["bound"].append(bound)
        cols["ratio"].append(ratio)
    table = {k: np.concatenate(v) for k, v in cols.items()}
    k = int(np.argmax(table["ratio"]))
    worst = float(table["ratio"][k])
    return CheckReport(f"grad_{mode}", tuple(cols), table, worst,
                       (float(table["t"][k]), int(table["node"][k])), float(tol_ratio),
                       worst <= 1.0 + tol_ratio)


def liyau_check(traj: Trajectory, params: LiYauParams, tol: float = 0.0,
                t_min: float = 0.0) -> CheckReport:
    """Evaluate ``|Du|^2/u^2 - a u_t/u - RHS(t)`` on snapshots with ``t > t_min``.

    ``u_t`` is the metric Laplacian of the snapshot, not a time difference.
    """
    geom = traj.grid.geom
    if traj.family.family != "heat":
        raise HypothesisError("the Li-Yau check applies to the heat equation only")
    if geom.family == "sphere_static":
        raise HypothesisError("the Li-Yau check needs a Ricci flow; sphere_static is not one")
    cols = {k: [] for k in ("t", "node", "lhs", "rhs", "margin")}
    for snap in traj.snapshots:
        if snap.t <= 0 or snap.t < t_min:
            continue
        u = snap.values.ravel()
        if np.any(u <= 0):
            raise PositivityError(f"u <= 0 at t={snap.t!r}; the Li-Yau bound needs u > 0")
        grad = gradient_norm(snap).ravel()
        u_t = laplacian(snap).ravel()
        lhs = grad * grad / (u * u) - params.alpha_ly * u_t / u
        rhs = np.full(u.shape, float(liyau_rhs(params, snap.t)))
        cols["t"].append(np.full(u.shape, snap.t))
        cols["node"].append(np.arange(u.size))
        cols["lhs"].append(lhs)
        cols["rhs"].append(rhs)
        cols["margin"].append(rhs - lhs)
    if not cols["t"]:
        raise ParameterError("no snapshot with t > 0 to check")
    table = {k: np.concatenate(v) for k, v in cols.items()}
    excess = table["lhs"] - table["rhs"]
    k = int(np.argmax(excess))
    worst = float(excess[k])
    return CheckReport("liyau", tuple(cols), table, worst,
                       (float(table["t"][k]), int(table["node"][k])), float(tol),
                       worst <= tol, meta=dict(params=params))


def epsilon_sensitivity(u0: ScalarField, fam: CoefficientFamily, t_end: float,
                        snapshot_times, eps_values, make_barrier, threads: int = 1,
                        c_cfl: float = DEFAULT_CFL):
    """Rerun the modulus-form check for several ``epsilon_reg`` values.

    ``make_barrier(family)`` builds the barrier for each regularized family.
    Returns ``(eps, global_worst, final_worst)`` rows and the spread
    ``max|w| / min|w|`` of the final-time worst values (1 when all agree).
    """
    rows = []
    for eps in eps_values:
        f = CoefficientFamily(fam.family, p=fam.p, epsilon_reg=float(eps), form=fam.form,
                              s_table=fam.s_table, alpha_table=fam.alpha_table,
                              beta_table=fam.beta_table, q_table=fam.q_table)
        traj = evolve(u0, f, t_end, snapshot_times, c_cfl=c_cfl)
        rep = two_point_check(traj, make_barrier(f), "modulus_form", threads=threads)
        rows.append((float(eps), rep.global_worst, float(rep.worst[-1])))
    finals = np.abs([r[2] for r in rows])
    if np.all(finals == finals[0]):
        spread = 1.0
    elif np.min(finals) == 0:
        spread = math.inf
    else:
        spread = float(np.max(finals) / np.min(finals))
    return rows, spread

