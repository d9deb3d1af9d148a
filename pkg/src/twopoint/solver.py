"""Explicit finite-difference time stepping on the model geometries.

Grids:

* circle -- ``N`` periodic nodes ``x_i = i L / N``;
* torus2 -- ``N x N`` periodic nodes, values stored as an ``(N, N)`` array;
* spheres -- the rotationally symmetric reduction on ``N`` colatitudes
  ``theta_i = i pi / (N - 1)`` including both poles.  Pole rows use ghost
  nodes reflected evenly across the pole, which turns ``cot(theta) u_theta``
  into ``u_theta_theta`` in the limit.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math

import numpy as np

from .equations import CoefficientFamily, evaluate_coefficients
from .errors import ConfigurationError, DivergenceError, DomainError, StabilityError
from .geometry import Geometry

log = logging.getLogger(__name__)

DEFAULT_CFL = 0.4


@dataclass(frozen=True, eq=False)
class Grid:
    geom: Geometry
    n: int
    axes: tuple
    spacing: tuple

    @property
    def shape(self):
        return (self.n, self.n) if self.geom.family == "torus2" else (self.n,)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def points(self):
        """Node coordinates in node-index order, ready for ``distance``."""
        if self.geom.family == "circle":
            return self.axes[0]
        if self.geom.family == "torus2":
            x, y = np.meshgrid(*self.axes, indexing="ij")
            return np.stack([x.ravel(), y.ravel()], axis=-1)
        theta = self.axes[0]
        return np.stack([theta, np.zeros_like(theta)], axis=-1)

    def metric_spacing(self, t) -> float:
        h = min(self.spacing)
        if self.geom.is_sphere:
            h *= float(self.geom.radius(t))
        return h


def make_grid(geom: Geometry, n: int) -> Grid:
    if n < 3:
        raise ConfigurationError("grids need at least 3 nodes per axis")
    if geom.family == "circle":
        h = geom.circle_length / n
        return Grid(geom, n, (np.arange(n) * h,), (h,))
    if geom.family == "torus2":
        a, b = geom.torus_lengths
        return Grid(geom, n, (np.arange(n) * (a / n), np.arange(n) * (b / n)), (a / n, b / n))
    h = math.pi / (n - 1)
    theta = np.arange(n) * h
    theta[-1] = math.pi
    return Grid(geom, n, (theta,), (h,))


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    t: float
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ConfigurationError(
                f"field shape {values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise DivergenceError(f"non-finite values in field at t={self.t}")
        object.__setattr__(self, "values", values)

    @property
    def geom(self) -> Geometry:
        return self.grid.geom

    @classmethod
    def from_function(cls, geom: Geometry, n: int, func, t: float = 0.0):
        """Sample ``func`` on a fresh grid.

        ``func`` receives ``x`` on the circle, ``(x, y)`` on the torus and
        ``theta`` on the spheres.
        """
        grid = make_grid(geom, n)
        if geom.family == "torus2":
            x, y = np.meshgrid(*grid.axes, indexing="ij")
            values = func(x, y)
        else:
            values = func(grid.axes[0])
        values = np.broadcast_to(np.asarray(values, dtype=float), grid.shape).copy()
        return cls(grid, float(t), values)


@dataclass(frozen=True, eq=False)
class Trajectory:
    snapshots: list
    family: CoefficientFamily
    c_cfl: float = DEFAULT_CFL
    dt_policy: str = "cfl"
    dt_max: float = 0.0
    n_steps: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        times = [s.t for s in self.snapshots]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("snapshot times must be strictly increasing")

    @property
    def times(self):
        return np.array([s.t for s in self.snapshots])

    @property
    def grid(self) -> Grid:
        return self.snapshots[0].grid


# -- derivatives ---------------------------------------------------------------

def _sphere_padded(u):
    return np.concatenate([u[1:2], u, u[-2:-1]])


def _derivatives(field: ScalarField):
    """Centered first and second differences used by the stepper."""
    u = field.values
    fam = field.geom.family
    if fam == "circle":
        (h,) = field.grid.spacing
        up, um = np.roll(u, -1), np.roll(u, 1)
        return dict(ux=(up - um) / (2 * h), uxx=(up - 2 * u + um) / (h * h))
    if fam == "torus2":
        hx, hy = field.grid.spacing
        xp, xm = np.roll(u, -1, axis=0), np.roll(u, 1, axis=0)
        yp, ym = np.roll(u, -1, axis=1), np.roll(u, 1, axis=1)
        uxy = (np.roll(xp, -1, axis=1) - np.roll(xp, 1, axis=1)
               - np.roll(xm, -1, axis=1) + np.roll(xm, 1, axis=1)) / (4 * hx * hy)
        return dict(ux=(xp - xm) / (2 * hx), uy=(yp - ym) / (2 * hy),
                    uxx=(xp - 2 * u + xm) / (hx * hx), uyy=(yp - 2 * u + ym) / (hy * hy),
                    uxy=uxy)
    (h,) = field.grid.spacing
    v = _sphere_padded(u)
    return dict(ut=(v[2:] - v[:-2]) / (2 * h), utt=(v[2:] - 2 * u + v[:-2]) / (h * h))


def gradient_norm(field: ScalarField):
    """Metric norm ``|Du|`` at every node.

    Centered differences, periodic on the circle and torus; second order
    one-sided differences at the sphere poles.
    """
    fam = field.geom.family
    if fam == "circle":
        return np.abs(_derivatives(field)["ux"])
    if fam == "torus2":
        d = _derivatives(field)
        return np.hypot(d["ux"], d["uy"])
    u = field.values
    (h,) = field.grid.spacing
    ut = np.empty_like(u)
    ut[1:-1] = (u[2:] - u[:-2]) / (2 * h)
    ut[0] = (-3 * u[0] + 4 * u[1] - u[2]) / (2 * h)
    ut[-1] = (3 * u[-1] - 4 * u[-2] + u[-3]) / (2 * h)
    return np.abs(ut) / float(field.geom.radius(field.t))


def _operator(field: ScalarField, fam: CoefficientFamily):
    """Right-hand side and the largest diffusivity ``max(alpha, beta)``.

    Evaluates ``beta * Lap u + (alpha - beta) * P:D^2u + q`` where ``P`` is
    the gradient projector normalized by ``s_eff^2``; at ``|Du| = 0`` this
    is ``beta * Lap u``.
    """
    d = _derivatives(field)
    fam_geom = field.geom.family
    eps2 = fam.epsilon_reg ** 2
    if fam_geom == "circle":
        s2 = d["ux"] ** 2
        lap = d["uxx"]
        proj = s2 * d["uxx"]
    elif fam_geom == "torus2":
        ux, uy = d["ux"], d["uy"]
        s2 = ux * ux + uy * uy
        lap = d["uxx"] + d["uyy"]
        proj = ux * ux * d["uxx"] + 2 * ux * uy * d["uxy"] + uy * uy * d["uyy"]
    else:
        r2 = float(field.geom.radius_sq(field.t))
        theta = field.grid.axes[0]
        h_tt = d["utt"] / r2
        h_ll = np.empty_like(h_tt)
        inner = slice(1, -1)
        h_ll[inner] = d["ut"][inner] / np.tan(theta[inner]) / r2
        h_ll[0], h_ll[-1] = h_tt[0], h_tt[-1]
        s2 = d["ut"] ** 2 / r2
        lap = h_tt + h_ll
        proj = s2 * h_tt
    s_eff2 = s2 + eps2
    with np.errstate(invalid="ignore", divide="ignore"):
        weighted = np.where(s_eff2 > 0, proj / np.where(s_eff2 > 0, s_eff2, 1.0), 0.0)
    alpha, beta, q = evaluate_coefficients(fam, field.values, np.sqrt(s2), field.t)
    rhs = beta * lap + (alpha - beta) * weighted + q
    diffusivity = float(np.max(np.maximum(alpha, beta)))
    return rhs, diffusivity


def _quiet_operator(field, fam):
    # overflow is reported as DivergenceError by the caller, not as warnings
    with np.errstate(over="ignore", invalid="ignore"):
        return _operator(field, fam)


def operator(field: ScalarField, fam: CoefficientFamily):
    """Spatial right-hand side of the equation at the field's time."""
    return _quiet_operator(field, fam)[0]


def laplacian(field: ScalarField):
    """Metric Laplacian of a field (the heat operator)."""
    return _operator(field, CoefficientFamily("heat"))[0]


def stable_dt(h_eff: float, diffusivity: float, c_cfl: float = DEFAULT_CFL) -> float:
    """``c_cfl * h_eff**2 / (2 * diffusivity)``."""
    if not diffusivity > 0:
        raise ConfigurationError("diffusivity must be positive somewhere for a CFL step")
    return c_cfl * h_eff * h_eff / (2.0 * diffusivity)


def _cfl_from(field: ScalarField, diffusivity: float, c_cfl: float) -> float:
    grid = field.grid
    dt = stable_dt(grid.metric_spacing(field.t), diffusivity, c_cfl)
    if field.geom.family == "sphere_shrinking":
        # the radius shrinks during the step; use the radius at its end
        t_next = min(field.t + dt, 0.5 * (field.t + field.geom.horizon))
        dt = stable_dt(grid.metric_spacing(t_next), diffusivity, c_cfl)
    return dt


def cfl_dt(field: ScalarField, fam: CoefficientFamily, c_cfl: float = DEFAULT_CFL) -> float:
    _, diffusivity = _operator(field, fam)
    return _cfl_from(field, diffusivity, c_cfl)


def _advance(field, rhs, dt):
    t_new = field.t + dt
    field.geom.check_time(t_new)
    with np.errstate(over="ignore", invalid="ignore"):
        values = field.values + dt * rhs
    if not np.all(np.isfinite(values)):
        raise DivergenceError(f"non-finite values after step to t={t_new!r}")
    return ScalarField(field.grid, t_new, values)


def step(field: ScalarField, fam: CoefficientFamily, dt: float,
         c_cfl: float = DEFAULT_CFL) -> ScalarField:
    """One explicit Euler step of size ``dt``."""
    rhs, diffusivity = _quiet_operator(field, fam)
    limit = _cfl_from(field, diffusivity, c_cfl)
    if dt > limit * (1 + 1e-12):
        raise StabilityError(f"dt={dt!r} exceeds the CFL limit {limit!r}")
    return _advance(field, rhs, dt)


def evolve(u0: ScalarField, fam: CoefficientFamily, t_end: float,
           snapshot_times=None, c_cfl: float = DEFAULT_CFL) -> Trajectory:
    """Integrate from ``u0.t`` to ``t_end`` with CFL-limited Euler steps.

    Steps are clipped so that every requested snapshot time is hit exactly.
    The returned trajectory always starts with ``u0``.
    """
    if t_end >= u0.geom.horizon:
        raise DomainError(
            f"t_end={t_end!r} is past the horizon {u0.geom.horizon!r} of {u0.geom.family}")
    if t_end < u0.t:
        raise ConfigurationError("t_end precedes the initial time")
    requested = () if snapshot_times is None else np.ravel(snapshot_times)
    targets = sorted({float(s) for s in requested if u0.t < s <= t_end})
    if t_end > u0.t and (not targets or targets[-1] != t_end):
        targets.append(float(t_end))

    snapshots = [u0]
    field, n_steps, dt_max = u0, 0, 0.0
    for target in targets:
        while field.t < target:
            rhs, diffusivity = _quiet_operator(field, fam)
            dt = _cfl_from(field, diffusivity, c_cfl)
            if field.t + dt >= target:
                dt = target - field.t
                field = _advance(field, rhs, dt)
                field = ScalarField(field.grid, target, field.values)
            else:
                field = _advance(field, rhs, dt)
            dt_max = max(dt_max, dt)
            n_steps += 1
        snapshots.append(field)
    log.debug("evolved %d steps to t=%g (dt_max=%g)", n_steps, t_end, dt_max)
    return Trajectory(snapshots, fam, c_cfl=c_cfl, dt_max=dt_max, n_steps=n_steps)
