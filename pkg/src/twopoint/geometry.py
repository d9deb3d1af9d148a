"""Closed model manifolds carrying exact time-dependent metrics.

Four families are provided:

``circle``
    flat circle of length ``L``; static, so trivially a Ricci flow.
``torus2``
    flat two-torus with side lengths ``(a, b)``; static and flat.
``sphere_static``
    round 2-sphere of fixed radius ``r0``; a strict supersolution of the
    Ricci flow since ``d/dt g = 0 >= -2 Ric``.
``sphere_shrinking``
    round 2-sphere of radius ``r(t) = sqrt(r0**2 - 2 t)``, the exact Ricci
    flow starting at the round metric.  Only defined for ``t < r0**2 / 2``.

Points are numpy arrays whose last axis holds chart coordinates: a scalar
``x`` on the circle, ``(x, y)`` on the torus and ``(theta, lon)`` with
colatitude ``theta in [0, pi]`` on the spheres.  All functions broadcast.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
import math

import numpy as np

from .errors import ConfigurationError, DomainError

FAMILIES = ("circle", "torus2", "sphere_shrinking", "sphere_static")


@dataclass(frozen=True)
class CurvatureBounds:
    """Ricci bounds ``-K0 <= Ric <= K1`` and ``|Ric| <= kappa``."""

    K0: float
    K1: float
    kappa: float

    def __post_init__(self):
        if min(self.K0, self.K1, self.kappa) < 0:
            raise ConfigurationError("curvature bounds must be nonnegative")


@dataclass(frozen=True)
class Geometry:
    family: str
    circle_length: float = 2 * math.pi
    torus_lengths: tuple[float, float] = (1.0, 1.0)
    r0: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(
                f"unknown geometry family {self.family!r}; expected one of {FAMILIES}")
        if self.circle_length <= 0 or self.r0 <= 0 or min(self.torus_lengths) <= 0:
            raise ConfigurationError("geometry lengths must be strictly positive")
        object.__setattr__(self, "torus_lengths", tuple(float(v) for v in self.torus_lengths))

    @property
    def dimension(self) -> int:
        return 1 if self.family == "circle" else 2

    @property
    def is_sphere(self) -> bool:
        return self.family.startswith("sphere")

    @property
    def horizon(self) -> float:
        """Supremum of admissible times (``inf`` for static families)."""
        if self.family == "sphere_shrinking":
            return self.r0 ** 2 / 2
        return math.inf

    @property
    def diameter(self) -> float:
        """Diameter at ``t = 0``; used as the barrier domain length."""
        if self.family == "circle":
            return self.circle_length / 2
        if self.family == "torus2":
            return math.hypot(*self.torus_lengths) / 2
        return math.pi * self.r0

    def check_time(self, t) -> None:
        if np.any(np.asarray(t) >= self.horizon):
            raise DomainError(
                f"t={np.max(t)!r} exceeds the horizon r0^2/2={self.horizon!r} "
                f"of {self.family}")

    def radius_sq(self, t):
        """``r(t)**2`` for the spheres; raises past the horizon."""
        self.check_time(t)
        if self.family == "sphere_shrinking":
            return self.r0 ** 2 - 2.0 * np.asarray(t, dtype=float)
        return np.full(np.shape(t), self.r0 ** 2)

    def radius(self, t):
        return np.sqrt(self.radius_sq(t))


def _diag(*entries):
    """Stack broadcast diagonal entries into ``(..., n, n)`` matrices."""
    entries = np.broadcast_arrays(*[np.asarray(e, dtype=float) for e in entries])
    n = len(entries)
    out = np.zeros(entries[0].shape + (n, n))
    for i, e in enumerate(entries):
        out[..., i, i] = e
    return out


def _round_diag(point):
    theta = np.asarray(point, dtype=float)[..., 0]
    return np.ones_like(theta), np.sin(theta) ** 2


def metric_at(geom: Geometry, point, t):
    """Chart components of ``g(t)`` at ``point`` as ``(..., n, n)`` arrays."""
    geom.check_time(t)
    if geom.family == "circle":
        return _diag(np.ones(np.shape(point)))
    if geom.family == "torus2":
        return _diag(*[np.ones(np.shape(point)[:-1])] * 2)
    r2 = geom.radius_sq(t)
    a, b = _round_diag(point)
    return _diag(r2 * a, r2 * b)


def metric_rate_at(geom: Geometry, point, t):
    """Exact time derivative of the chart components of ``g(t)``."""
    geom.check_time(t)
    if geom.family == "circle":
        return _diag(np.zeros(np.shape(point)))
    if geom.family == "torus2":
        return _diag(*[np.zeros(np.shape(point)[:-1])] * 2)
    a, b = _round_diag(point)
    rate = -2.0 if geom.family == "sphere_shrinking" else 0.0
    return _diag(rate * a, rate * b)


def ricci_at(geom: Geometry, point, t):
    """Chart components of the Ricci tensor of ``g(t)``.

    On a round 2-sphere of radius ``r`` Ric = g / r**2, which in the chart is
    the unit round metric independently of ``r``.
    """
    geom.check_time(t)
    if geom.family == "circle":
        return _diag(np.zeros(np.shape(point)))
    if geom.family == "torus2":
        return _diag(*[np.zeros(np.shape(point)[:-1])] * 2)
    return _diag(*_round_diag(point))


def supersolution_residual(geom: Geometry, point, t):
    """Smallest eigenvalue of ``d/dt g + 2 Ric`` in a ``g``-orthonormal frame.

    All metrics here are diagonal in their charts, so the eigenvalues are the
    ratios of diagonal entries.  Components where the chart degenerates
    (the sphere poles) are skipped; the tensor is isotropic there.
    """
    g = np.diagonal(metric_at(geom, point, t), axis1=-2, axis2=-1)
    a = np.diagonal(metric_rate_at(geom, point, t) + 2.0 * ricci_at(geom, point, t),
                    axis1=-2, axis2=-1)
    good = g > 0
    ratio = np.where(good, a / np.where(good, g, 1.0), np.inf)
    return np.min(ratio, axis=-1)


def _sphere_angle(p, q):
    """Central angle between colatitude/longitude points (Vincenty form)."""
    # order each pair canonically so that d(x, y) and d(y, x) are bitwise equal
    swap = (p[..., 0] > q[..., 0]) | ((p[..., 0] == q[..., 0]) & (p[..., 1] > q[..., 1]))
    p, q = (np.where(swap[..., None], q, p), np.where(swap[..., None], p, q))
    lat1 = np.pi / 2 - p[..., 0]
    lat2 = np.pi / 2 - q[..., 0]
    dlon = q[..., 1] - p[..., 1]
    c1, s1, c2, s2 = np.cos(lat1), np.sin(lat1), np.cos(lat2), np.sin(lat2)
    num = np.hypot(c2 * np.sin(dlon), c1 * s2 - s1 * c2 * np.cos(dlon))
    den = s1 * s2 + c1 * c2 * np.cos(dlon)
    return np.arctan2(num, den)


def distance(geom: Geometry, x, y, t):
    """Geodesic distance ``d_t(x, y)``; broadcasts over leading axes."""
    geom.check_time(t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if geom.family == "circle":
        L = geom.circle_length
        d = np.mod(np.abs(y - x), L)
        return np.minimum(d, L - d)
    if geom.family == "torus2":
        a, b = geom.torus_lengths
        dx = y[..., 0] - x[..., 0]
        dy = y[..., 1] - x[..., 1]
        best = None
        # exact for points given in the fundamental domain
        for i, j in product((-1, 0, 1), repeat=2):
            cand = np.hypot(dx + i * a, dy + j * b)
            best = cand if best is None else np.minimum(best, cand)
        return best
    return geom.radius(t) * _sphere_angle(x, y)


def curvature_bounds(geom: Geometry, t_interval) -> CurvatureBounds:
    """Tightest Ricci bounds valid over the whole closed interval."""
    t0, t1 = t_interval
    if t1 < t0:
        raise ConfigurationError("curvature_bounds needs t0 <= t1")
    geom.check_time(t1)
    if not geom.is_sphere:
        return CurvatureBounds(0.0, 0.0, 0.0)
    # Ric = g / r^2 and r(t) is nonincreasing, so the supremum sits at t1
    k1 = float(1.0 / geom.radius_sq(t1))
    return CurvatureBounds(K0=0.0, K1=k1, kappa=k1)
