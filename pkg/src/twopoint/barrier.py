"""Barrier functions phi(s, t), their admissibility conditions and inverse.

A barrier is either *analytic* -- a closed-form expression in ``s`` and ``t``
differentiated symbolically -- or *tabulated* on an ``(t_grid, s_grid)``
lattice.  Tabulated barriers are interpolated with a cubic spline in ``s``
and linearly in ``t``; at the lattice nodes their derivatives come from
finite differences with the closure

    phi''(0) = 0,    phi''(D) = phi''(D - h),    phi'(0), phi'(D) one-sided,

which is also the boundary rule used by :func:`solve_barrier`.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
import sympy

from .equations import CoefficientFamily, evaluate_coefficients
from .errors import (ConfigurationError, ConstructionError, DomainError,
                     MonotonicityError, RangeError, TwoPointError)
from .geometry import CurvatureBounds
from .solver import DEFAULT_CFL, stable_dt

MODES = ("elliptic_1_3", "parabolic_thm14", "parabolic_eq16")
STRICT_MODES = ("elliptic_1_3", "parabolic_thm14")
DEFAULT_MARGIN = 1e-8


class DivisionError(TwoPointError, ZeroDivisionError):
    pass


def parse_expression(text: str, variables):
    """Parse a closed-form expression restricted to ``variables``."""
    names = {v: sympy.Symbol(v, real=True) for v in variables}
    names.update(pi=sympy.pi, e=sympy.E)
    try:
        expr = sympy.parse_expr(str(text), local_dict=names)
    except Exception as exc:  # sympy raises a zoo of types here
        raise ConfigurationError(f"cannot parse expression {text!r}: {exc}") from None
    extra = {str(sym) for sym in expr.free_symbols} - set(variables)
    if extra:
        raise ConfigurationError(
            f"expression {text!r} uses unknown symbols {sorted(extra)}; allowed {list(variables)}")
    return expr, [names[v] for v in variables]


def _vectorize(expr, symbols):
    fn = sympy.lambdify(symbols, expr, modules="numpy")

    def call(*args):
        shape = np.broadcast(*[np.asarray(a) for a in args]).shape
        return np.broadcast_to(np.asarray(fn(*args), dtype=float), shape).copy()
    return call


@dataclass(frozen=True, eq=False)
class Barrier:
    """Barrier data on ``[0, s_max] x [t_grid[0], t_grid[-1]]``.

    ``phi`` and ``phi_t`` are ``(len(t_grid), len(s_grid))`` arrays.  For
    analytic barriers they hold exact samples; ``expression`` keeps the
    closed form.
    """

    s_grid: np.ndarray
    t_grid: np.ndarray
    phi: np.ndarray
    phi_t: np.ndarray
    expression: str | None = None

    def __post_init__(self):
        s = np.asarray(self.s_grid, dtype=float)
        t = np.asarray(self.t_grid, dtype=float)
        if s.ndim != 1 or len(s) < 4 or s[0] != 0.0:
            raise ConfigurationError("s_grid must start at 0 and hold at least 4 nodes")
        h = np.diff(s)
        if np.any(h <= 0) or not np.allclose(h, h[0], rtol=1e-9, atol=0):
            raise ConfigurationError("s_grid must be uniform and increasing")
        if t.ndim != 1 or len(t) < 1 or np.any(np.diff(t) <= 0):
            raise ConfigurationError("t_grid must be strictly increasing")
        phi = np.asarray(self.phi, dtype=float).reshape(len(t), len(s))
        phi_t = np.asarray(self.phi_t, dtype=float).reshape(len(t), len(s))
        if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(phi_t))):
            raise ConfigurationError("barrier values must be finite")
        object.__setattr__(self, "s_grid", s)
        object.__setattr__(self, "t_grid", t)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "phi_t", phi_t)
        if self.expression is not None:
            expr, syms = parse_expression(self.expression, ("s", "t"))
            fns = [_vectorize(e, syms) for e in
                   (expr, sympy.diff(expr, syms[0]), sympy.diff(expr, syms[0], 2),
                    sympy.diff(expr, syms[1]))]
            object.__setattr__(self, "_closed", fns)
        else:
            object.__setattr__(self, "_splines", [CubicSpline(s, row) for row in phi])
            object.__setattr__(self, "_splines_t", [CubicSpline(s, row) for row in phi_t])

    @property
    def analytic(self) -> bool:
        return self.expression is not None

    @property
    def s_max(self) -> float:
        return float(self.s_grid[-1])

    @property
    def h(self) -> float:
        return float(self.s_grid[1] - self.s_grid[0])

    @classmethod
    def from_expression(cls, expression: str, s_max: float, t_grid, n_s: int = 129):
        """Closed-form barrier sampled on ``n_s`` nodes of ``[0, s_max]``."""
        s = np.linspace(0.0, s_max, n_s)
        t = np.atleast_1d(np.asarray(t_grid, dtype=float))
        expr, syms = parse_expression(expression, ("s", "t"))
        f = _vectorize(expr, syms)
        ft = _vectorize(sympy.diff(expr, syms[1]), syms)
        tt, ss = np.meshgrid(t, s, indexing="ij")
        return cls(s, t, f(ss, tt), ft(ss, tt), expression=str(expression))

    @classmethod
    def tabulated(cls, s_grid, t_grid, phi, phi_t=None):
        """Barrier from samples; ``phi_t`` defaults to time differences."""
        phi = np.atleast_2d(np.asarray(phi, dtype=float))
        t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
        if phi_t is None:
            if len(t_grid) > 1:
                phi_t = np.gradient(phi, t_grid, axis=0, edge_order=1)
            else:
                phi_t = np.zeros_like(phi)
        return cls(s_grid, t_grid, phi, phi_t)

    # -- time interpolation -------------------------------------------------
    def _time_weights(self, t):
        tg = self.t_grid
        tol = 1e-12 * max(1.0, abs(tg[-1]))
        if t < tg[0] - tol or t > tg[-1] + tol:
            raise DomainError(f"t={t!r} outside barrier time range [{tg[0]}, {tg[-1]}]")
        k = int(np.clip(np.searchsorted(tg, t, side="right") - 1, 0, len(tg) - 1))
        if k == len(tg) - 1 or abs(t - tg[k]) <= tol:
            return k, k, 0.0
        if abs(t - tg[k + 1]) <= tol:
            return k + 1, k + 1, 0.0
        return k, k + 1, (t - tg[k]) / (tg[k + 1] - tg[k])


def _check_s(b: Barrier, s):
    s = np.asarray(s, dtype=float)
    tol = 1e-12 * max(1.0, b.s_max)
    if np.any(s < -tol) or np.any(s > b.s_max + tol):
        raise DomainError(f"s outside barrier domain [0, {b.s_max}]")
    return np.clip(s, 0.0, b.s_max)


def eval_barrier(b: Barrier, s, t: float):
    """Return ``(phi, phi_s, phi_ss, phi_t)`` at ``(s, t)``; broadcasts in ``s``."""
    s = _check_s(b, s)
    t = float(t)
    k0, k1, w = b._time_weights(t)
    if b.analytic:
        return tuple(fn(s, t) for fn in b._closed)

    def blend(splines, nu):
        a = splines[k0](s, nu)
        return a if w == 0.0 else (1 - w) * a + w * splines[k1](s, nu)
    return blend(b._splines, 0), blend(b._splines, 1), blend(b._splines, 2), \
        blend(b._splines_t, 0)


def node_derivatives(phi, h):
    """First and second s-differences of barrier rows at the lattice nodes."""
    phi = np.asarray(phi, dtype=float)
    d1 = np.empty_like(phi)
    d2 = np.empty_like(phi)
    d1[..., 1:-1] = (phi[..., 2:] - phi[..., :-2]) / (2 * h)
    d1[..., 0] = (phi[..., 1] - phi[..., 0]) / h
    d1[..., -1] = (phi[..., -1] - phi[..., -2]) / h
    d2[..., 1:-1] = (phi[..., 2:] - 2 * phi[..., 1:-1] + phi[..., :-2]) / (h * h)
    d2[..., 0] = 0.0
    d2[..., -1] = d2[..., -2]
    return d1, d2


def _node_values(b: Barrier):
    """``phi, phi', phi'', phi_t`` on the full lattice, shape ``(nt, ns)``."""
    if b.analytic:
        tt, ss = np.meshgrid(b.t_grid, b.s_grid, indexing="ij")
        return tuple(fn(ss, tt) for fn in b._closed)
    d1, d2 = node_derivatives(b.phi, b.h)
    return b.phi, d1, d2, b.phi_t


def eq16_rhs(fam: CoefficientFamily, kappa: float, s, phi, d1, d2, t):
    """``phi'' alpha(phi', t) + kappa s |phi' (1 - beta(phi', t))|``."""
    alpha, beta, _ = evaluate_coefficients(fam, phi, d1, t)
    return d2 * alpha + kappa * s * np.abs(d1 * (1.0 - beta))


@dataclass(frozen=True, eq=False)
class ConditionReport:
    mode: str
    worst_residual: float
    worst_location: tuple
    passed: bool
    margin: float
    residual: np.ndarray
    s_grid: np.ndarray
    t_grid: np.ndarray


def verify_condition(b: Barrier, fam: CoefficientFamily, mode: str,
                     bounds: CurvatureBounds | None = None, margin: float | None = None
                     ) -> ConditionReport:
    """Evaluate a barrier inequality at every lattice node.

    The residual is oriented so that the condition reads ``residual >= 0``:

    * ``parabolic_eq16``: ``phi_t - phi'' alpha - kappa s |phi'(1 - beta)|``;
    * ``parabolic_thm14``: ``-d/ds [(phi_t - phi'' alpha + q) / (phi' beta)]``;
    * ``elliptic_1_3``: ``-d/ds [(phi'' alpha + q) / (phi' beta)]``.

    The two quotient conditions are strict, so they also need a positive
    residual; ``margin`` defaults to 1e-8 for them and to 0 for eq16.
    """
    if mode not in MODES:
        raise ConfigurationError(f"unknown barrier mode {mode!r}; expected one of {MODES}")
    if margin is None:
        margin = DEFAULT_MARGIN if mode in STRICT_MODES else 0.0
    kappa = bounds.kappa if bounds is not None else 0.0
    phi, d1, d2, phi_t = _node_values(b)
    if np.any(d1 <= 0):
        k, i = np.unravel_index(np.argmax(d1 <= 0), d1.shape)
        raise MonotonicityError(
            f"phi' <= 0 at s={b.s_grid[i]!r}, t={b.t_grid[k]!r}")
    t_col = b.t_grid[:, None]
    s_row = b.s_grid[None, :]
    if mode == "parabolic_eq16":
        residual = phi_t - eq16_rhs(fam, kappa, s_row, phi, d1, d2, t_col)
    else:
        alpha, beta, q = evaluate_coefficients(fam, phi, d1, t_col)
        if np.any(beta == 0):
            raise DivisionError("beta vanishes on the barrier")
        if mode == "parabolic_thm14":
            quotient = (phi_t - d2 * alpha + q) / (d1 * beta)
        else:
            quotient = (d2 * alpha + q) / (d1 * beta)
        residual = -np.gradient(quotient, b.s_grid, axis=1)
    flat = int(np.argmin(residual))
    k, i = np.unravel_index(flat, residual.shape)
    worst = float(residual[k, i])
    ok = worst >= margin and (worst > 0 or mode not in STRICT_MODES)
    return ConditionReport(mode, worst, (float(b.s_grid[i]), float(b.t_grid[k])), bool(ok),
                           float(margin), residual, b.s_grid, b.t_grid)


def solve_barrier(fam: CoefficientFamily, bounds: CurvatureBounds, phi0, delta: float,
                  t_grid, s_grid, c_cfl: float = DEFAULT_CFL) -> Barrier:
    """Integrate ``phi_t = phi'' alpha(phi') + kappa s |phi'(1 - beta(phi'))| + delta``.

    Method of lines with CFL-limited explicit Euler steps that land exactly
    on ``t_grid``.  The stored ``phi_t`` rows are the right-hand side at the
    stored profiles, so the barrier satisfies the eq16 inequality with
    residual ``delta`` at every node.
    """
    if delta < 0:
        raise ConfigurationError("delta must be nonnegative")
    s = np.asarray(s_grid, dtype=float)
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    phi = np.asarray(phi0(s) if callable(phi0) else phi0, dtype=float).copy()
    if phi.shape != s.shape:
        raise ConfigurationError("phi0 must be sampled on s_grid")
    if np.any(np.diff(phi) <= 0):
        raise ConfigurationError("phi0 must be strictly increasing")
    h = float(s[1] - s[0])
    kappa = bounds.kappa if bounds is not None else 0.0

    def rhs(phi, t):
        d1, d2 = node_derivatives(phi, h)
        alpha, _, _ = evaluate_coefficients(fam, phi, d1, t)
        return eq16_rhs(fam, kappa, s, phi, d1, d2, t), float(np.max(alpha))

    rows, rows_t = [], []
    t = float(t_grid[0])
    for target in t_grid:
        while t < target:
            r, diffusivity = rhs(phi, t)
            dt = stable_dt(h, max(diffusivity, 1e-300), c_cfl)
            dt = min(dt, target - t)
            phi = phi + dt * (r + delta)
            t = float(target) if t + dt >= target else t + dt
            if not np.all(np.isfinite(phi)):
                raise ConstructionError(f"barrier diverged at t={t!r}", time=t)
            if np.any(np.diff(phi) <= 0):
                raise ConstructionError(f"barrier lost monotonicity at t={t!r}", time=t)
        r, _ = rhs(phi, t)
        rows.append(phi.copy())
        rows_t.append(r + delta)
    return Barrier(s, t_grid, np.array(rows), np.array(rows_t))


def invert(b: Barrier, z, t: float, tol: float = 1e-10):
    """``Psi(z, t)``: the ``s`` with ``phi(s, t) = z``, by vectorized bisection."""
    z = np.asarray(z, dtype=float)
    lo_val = float(eval_barrier(b, 0.0, t)[0])
    hi_val = float(eval_barrier(b, b.s_max, t)[0])
    slack = 1e-12 * max(1.0, abs(lo_val), abs(hi_val))
    bad = (z < lo_val - slack) | (z > hi_val + slack)
    if np.any(bad):
        offending = float(np.atleast_1d(z)[np.argmax(np.atleast_1d(bad))])
        raise RangeError(
            f"value {offending!r} outside barrier range [{lo_val!r}, {hi_val!r}] at t={t!r}",
            value=offending)
    lo = np.zeros(z.shape)
    hi = np.full(z.shape, b.s_max)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        above = eval_barrier(b, mid, t)[0] >= z
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
        if np.all(hi - lo <= 4 * np.spacing(np.maximum(hi, 1.0))):
            break
    psi = 0.5 * (lo + hi)
    resid = np.abs(eval_barrier(b, psi, t)[0] - z)
    if np.any(resid > max(tol, 4 * slack)):
        raise RangeError(f"bisection residual {float(np.max(resid))!r} above {tol}")
    return psi if psi.shape else float(psi)


def to_csv(b: Barrier, path) -> None:
    """Export ``s, t, phi`` rows, time-major, at full precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "t", "phi"])
        for k, t in enumerate(b.t_grid):
            for i, s in enumerate(b.s_grid):
                w.writerow([f"{s:.17g}", f"{t:.17g}", f"{b.phi[k, i]:.17g}"])


def from_csv(path) -> Barrier:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 3:
        raise ConfigurationError(f"{path}: expected columns s,t,phi")
    s_grid = np.unique(data[:, 0])
    t_grid = np.unique(data[:, 1])
    if len(data) != len(s_grid) * len(t_grid):
        raise ConfigurationError(f"{path}: rows do not form a full (s, t) lattice")
    order = np.lexsort((data[:, 0], data[:, 1]))
    phi = data[order, 2].reshape(len(t_grid), len(s_grid))
    return Barrier.tabulated(s_grid, t_grid, phi)


def lipschitz_constant(b: Barrier) -> float:
    """Largest ``phi'`` over the lattice."""
    return float(np.max(_node_values(b)[1]))

