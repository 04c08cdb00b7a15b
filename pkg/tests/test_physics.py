import math
from types import SimpleNamespace

import numpy as np
import pytest
import sympy as sp

from cavity_pinn.autodiff import PLAIN, Tape, TaylorTuple
from cavity_pinn.physics import (
    FluidParams,
    LidProfile,
    boundary_residual,
    boundary_target,
    continuity_residual,
    manufactured_field,
    momentum_residual,
    residuals,
    reynolds_to_viscosity,
)


def plain(*slots):
    return TaylorTuple(PLAIN, *slots)


# -- Reynolds / viscosity -----------------------------------------------------------


@pytest.mark.parametrize("re, mu", [(100, 0.01), (50, 0.02), (1, 1.0), (200, 0.005)])
def test_viscosity_from_reynolds(re, mu):
    assert reynolds_to_viscosity(re) == mu


@pytest.mark.parametrize("mu_rounded, re", [(0.00667, 150), (0.00333, 300)])
def test_rounded_viscosities_map_back(mu_rounded, re):
    assert abs(1.0 / mu_rounded - re) / re < 2e-3
    assert reynolds_to_viscosity(re) == 1.0 / re


@pytest.mark.parametrize("re", [0.0, -5.0])
def test_non_positive_reynolds(re):
    with pytest.raises(ValueError):
        reynolds_to_viscosity(re)
    with pytest.raises(ValueError):
        FluidParams(re)


def test_fluid_params_mu():
    assert FluidParams(150.0).mu * 150.0 == pytest.approx(1.0, abs=1e-15)


# -- lid ---------------------------------------------------------------------------


def test_lid_profiles():
    reg = LidProfile.REGULARIZED
    assert reg.velocity(0.0) == 0.0 and reg.velocity(1.0) == 0.0
    assert reg.velocity(0.5) == 1.0
    assert LidProfile.CONSTANT.velocity(0.3) == 1.0
    assert LidProfile.parse("Regularized") is reg
    with pytest.raises(ValueError):
        LidProfile.parse("parabolic")


# -- continuity -------------------------------------------------------------------


def test_continuity_uniform_field():
    c = plain(2.0, 0.0, 0.0, 0.0, 0.0)
    assert continuity_residual(c, c) == 0.0


def test_continuity_taylor_green_vanishes():
    rng = np.random.default_rng(0)
    for x, y in rng.uniform(-3, 3, size=(20, 2)):
        u, v, _ = manufactured_field(x, y)
        assert abs(continuity_residual(u, v)) < 1e-15


def test_continuity_of_linear_field():
    u = plain(0.3, 1.0, 0.0, 0.0, 0.0)  # u = x
    v = plain(0.6, 0.0, 1.0, 0.0, 0.0)  # v = y
    assert continuity_residual(u, v) == 2.0


def test_continuity_on_tape_is_differentiable():
    t = Tape()
    u = TaylorTuple(t, t.var(0.1), t.var(0.4), t.var(0.0), t.var(0.0), t.var(0.0))
    v = TaylorTuple(t, t.var(0.2), t.var(0.0), t.var(-0.1), t.var(0.0), t.var(0.0))
    r = continuity_residual(u, v)
    adj = t.backward(t.square(r))
    assert t.value(r) == pytest.approx(0.3)
    assert adj[u.dx] == pytest.approx(0.6) and adj[v.dy] == pytest.approx(0.6)


# -- momentum -------------------------------------------------------------------------


def test_uniform_flow_has_no_momentum_residual():
    u = plain(1.0, 0.0, 0.0, 0.0, 0.0)
    v = plain(0.0, 0.0, 0.0, 0.0, 0.0)
    p = plain(3.0, 0.0, 0.0, 0.0, 0.0)
    assert momentum_residual(u, v, p, FluidParams(100.0)) == (0.0, 0.0)


def test_taylor_green_solves_euler():
    inviscid = SimpleNamespace(mu=0.0, rho=1.0)
    rng = np.random.default_rng(1)
    for x, y in rng.uniform(-3, 3, size=(50, 2)):
        u, v, p = manufactured_field(x, y)
        rx, ry = momentum_residual(u, v, p, inviscid)
        assert abs(rx) < 1e-14 and abs(ry) < 1e-14


@pytest.mark.parametrize("rho", [1.0, 2.5])
def test_taylor_green_viscous_residual(rho):
    fluid = SimpleNamespace(mu=0.02, rho=rho)
    rng = np.random.default_rng(2)
    for x, y in rng.uniform(-3, 3, size=(100, 2)):
        u, v, p = manufactured_field(x, y, rho)
        rx, ry = momentum_residual(u, v, p, fluid)
        k = 2 * fluid.mu / rho
        assert abs(rx - k * u.val) < 1e-10
        assert abs(ry - k * v.val) < 1e-10


def test_residual_bundle_on_arrays():
    x = np.linspace(0, 1, 7)
    u, v, p = manufactured_field(x, 0.3)
    b = residuals(u, v, p, FluidParams(50.0))
    np.testing.assert_allclose(b.r_cont, 0.0, atol=1e-15)
    np.testing.assert_allclose(b.r_momx, 2 * 0.02 * u.val, atol=1e-14)


def _symbolic_tables():
    X, Y, R = sp.symbols("x y rho")
    fields = [-sp.cos(X) * sp.sin(Y), sp.sin(X) * sp.cos(Y), -(R / 4) * (sp.cos(2 * X) + sp.cos(2 * Y))]
    return X, Y, R, [[f, sp.diff(f, X), sp.diff(f, Y), sp.diff(f, X, 2), sp.diff(f, Y, 2)] for f in fields]


def test_manufactured_slots_against_symbolic_differentiation():
    X, Y, R, table = _symbolic_tables()
    subs = {X: 0.3, Y: 0.7, R: 1.3}
    got = manufactured_field(0.3, 0.7, 1.3)
    for tup, exprs in zip(got, table):
        for value, expr in zip(tup.slots, exprs):
            assert value == pytest.approx(float(expr.evalf(subs=subs)), rel=1e-13, abs=1e-15)


def test_manufactured_special_points():
    u, _, _ = manufactured_field(math.pi / 2, math.pi / 2)
    assert abs(u.val) < 1e-16
    u, v, p = manufactured_field(0.0, 0.0)
    assert (u.val, v.val, p.val) == (0.0, 0.0, -0.5)


def test_convective_term_gradient():
    """d(r_x)/d(u) = u_x through u u_x; v-advection routes through v only."""
    t = Tape()
    vals = dict(u=0.3, ux=-0.7, uy=0.2, v=0.5, vx=0.1, vy=0.7, px=0.4, py=-0.2)
    n = {k: t.var(v) for k, v in vals.items()}
    zero = t.var(0.0)
    u = TaylorTuple(t, n["u"], n["ux"], n["uy"], zero, zero)
    v = TaylorTuple(t, n["v"], n["vx"], n["vy"], zero, zero)
    p = TaylorTuple(t, zero, n["px"], n["py"], zero, zero)
    rx, ry = momentum_residual(u, v, p, FluidParams(100.0))
    adj = t.backward(rx)
    assert adj[n["u"]] == vals["ux"]
    assert adj[n["v"]] == vals["uy"]
    assert adj[n["ux"]] == vals["u"]
    adj = t.backward(ry)
    assert adj[n["u"]] == vals["vx"]
    assert adj[n["v"]] == vals["vy"]


# -- boundary --------------------------------------------------------------------------


def test_stationary_wall_residual():
    assert boundary_residual(0.0, 0.0, (0.4, 0.0), LidProfile.REGULARIZED) == (0.0, 0.0)


def test_lid_peak_residual():
    assert boundary_residual(1.0, 0.0, (0.5, 1.0), LidProfile.REGULARIZED) == (0.0, 0.0)


def test_lid_quarter_residual():
    assert boundary_residual(0.0, 0.0, (0.25, 1.0), LidProfile.REGULARIZED) == (-0.5625, 0.0)


def test_corners_belong_to_walls():
    for corner in [(0.0, 1.0), (1.0, 1.0)]:
        assert boundary_target(*corner, LidProfile.CONSTANT) == (0.0, 0.0)


def test_interior_point_is_rejected():
    with pytest.raises(ValueError):
        boundary_residual(0.0, 0.0, (0.5, 0.5), LidProfile.CONSTANT)
