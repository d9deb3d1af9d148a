import math

import numpy as np
import pytest

from twopoint.equations import CoefficientFamily
from twopoint.errors import DivergenceError, DomainError, StabilityError
from twopoint.geometry import Geometry
from twopoint.solver import (ScalarField, cfl_dt, evolve, gradient_norm, laplacian, make_grid,
                             operator, stable_dt, step)

HEAT = CoefficientFamily("heat")


def loop_heat_step(u, h, dt):
    """Reference explicit Euler step for the periodic heat equation."""
    n = len(u)
    out = [0.0] * n
    for i in range(n):
        lap = (u[(i + 1) % n] - 2 * u[i] + u[i - 1]) / (h * h)
        out[i] = u[i] + dt * lap
    return out


def test_stable_dt_formula():
    assert stable_dt(0.1, 2.0, 0.4) == pytest.approx(0.4 * 0.01 / 4)


def test_matches_loop_oracle():
    geom = Geometry("circle")
    f = ScalarField.from_function(geom, 32, np.sin)
    h = 2 * math.pi / 32
    dt = 0.4 * h * h / 2
    ref = list(f.values)
    for _ in range(100):
        f = step(f, HEAT, dt)
        ref = loop_heat_step(ref, h, dt)
        assert np.max(np.abs(f.values - ref)) <= 1e-12


def test_step_rejects_large_dt():
    f = ScalarField.from_function(Geometry("circle"), 32, np.sin)
    with pytest.raises(StabilityError):
        step(f, HEAT, 2 * cfl_dt(f, HEAT))


def test_nonfinite_field_rejected():
    with pytest.raises(DivergenceError):
        ScalarField.from_function(Geometry("circle"), 8, lambda x: np.full_like(x, np.nan))


def test_snapshots_land_exactly():
    f = ScalarField.from_function(Geometry("circle"), 32, np.sin)
    traj = evolve(f, HEAT, 0.1, [0.0, 0.013, 0.05])
    assert list(traj.times) == [0.0, 0.013, 0.05, 0.1]
    assert traj.snapshots[0] is f
    assert traj.dt_max <= stable_dt(2 * math.pi / 32, 1.0) * (1 + 1e-12)


def test_horizon_rejected():
    f = ScalarField.from_function(Geometry("sphere_shrinking"), 17, np.cos)
    with pytest.raises(DomainError):
        evolve(f, HEAT, 0.5)


def circle_error(n, t=0.1):
    f = ScalarField.from_function(Geometry("circle"), n, np.sin)
    g = evolve(f, HEAT, t).snapshots[-1]
    return np.max(np.abs(g.values - math.exp(-t) * np.sin(g.grid.axes[0])))


def test_circle_second_order():
    e1, e2 = circle_error(32), circle_error(64)
    assert e1 / e2 >= 3.5


def test_torus_closed_form():
    geom = Geometry("torus2")
    f = ScalarField.from_function(geom, 32, lambda x, y: np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y))
    t = 0.005
    g = evolve(f, HEAT, t).snapshots[-1]
    exact = math.exp(-8 * math.pi ** 2 * t) * f.values
    assert np.max(np.abs(g.values - exact)) < 2e-3


def test_static_sphere_closed_form():
    geom = Geometry("sphere_static", r0=2.0)
    f = ScalarField.from_function(geom, 65, np.cos)
    t = 0.5
    g = evolve(f, HEAT, t).snapshots[-1]
    exact = math.exp(-2 * t / 4.0) * f.values
    assert np.max(np.abs(g.values - exact)) < 1e-4


def shrinking_sphere_error(n, t=0.25):
    # Lap_{g(t)} cos = -2 cos / (1 - 2t), so u = 2 + (1 - 2t) cos solves the heat equation
    f = ScalarField.from_function(Geometry("sphere_shrinking"), n, lambda th: 2 + np.cos(th))
    g = evolve(f, HEAT, t).snapshots[-1]
    return np.max(np.abs(g.values - (2 + (1 - 2 * t) * np.cos(g.grid.axes[0]))))


def test_shrinking_sphere_closed_form():
    e1, e2 = shrinking_sphere_error(33), shrinking_sphere_error(65)
    assert e2 < 2e-4
    assert e1 / e2 >= 3.5


def test_sphere_laplacian_of_cosine():
    geom = Geometry("sphere_static")
    f = ScalarField.from_function(geom, 129, np.cos)
    np.testing.assert_allclose(laplacian(f), -2 * f.values, atol=1e-3)


def test_gradient_norm_sphere():
    geom = Geometry("sphere_shrinking")
    f = ScalarField.from_function(geom, 257, np.cos, t=0.25)
    r = math.sqrt(0.5)
    np.testing.assert_allclose(gradient_norm(f), np.abs(np.sin(f.grid.axes[0])) / r, atol=1e-4)


def test_graphical_mcf_operator_torus():
    geom = Geometry("torus2")
    fam = CoefficientFamily("graphical_mcf", epsilon_reg=0.0)
    f = ScalarField.from_function(geom, 64, lambda x, y: 0.2 * np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y))
    x, y = np.meshgrid(*f.grid.axes, indexing="ij")
    k = 2 * np.pi
    ux = 0.2 * k * np.cos(k * x) * np.cos(k * y)
    uy = -0.2 * k * np.sin(k * x) * np.sin(k * y)
    uxx = -k * k * f.values
    uyy = -k * k * f.values
    uxy = -0.2 * k * k * np.cos(k * x) * np.sin(k * y)
    g2 = 1 + ux ** 2 + uy ** 2
    exact = ((1 - ux * ux / g2) * uxx - 2 * ux * uy / g2 * uxy + (1 - uy * uy / g2) * uyy)
    assert np.max(np.abs(operator(f, fam) - exact)) < 0.02 * np.max(np.abs(exact))


def test_p_laplacian_two_is_heat():
    f = ScalarField.from_function(Geometry("circle"), 64, np.sin)
    np.testing.assert_allclose(operator(f, CoefficientFamily("p_laplacian", p=2.0)),
                               laplacian(f), atol=1e-12)


def test_p_laplacian_operator_1d():
    # u_t = (|u_x| u_x)_x = 2 |u_x| u_xx for p = 3
    fam = CoefficientFamily("p_laplacian", p=3.0, epsilon_reg=0.0)
    f = ScalarField.from_function(Geometry("circle"), 512, np.sin)
    x = f.grid.axes[0]
    exact = -2 * np.abs(np.cos(x)) * np.sin(x)
    assert np.max(np.abs(operator(f, fam) - exact)) < 1e-3


def test_grid_layout():
    g = make_grid(Geometry("sphere_static"), 5)
    assert g.axes[0][0] == 0 and g.axes[0][-1] == math.pi
    assert make_grid(Geometry("torus2"), 4).points.shape == (16, 2)
