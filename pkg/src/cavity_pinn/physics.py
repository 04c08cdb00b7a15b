"""Steady incompressible Navier-Stokes residuals, lid profiles and a manufactured field.

The residual operators work on :class:`~cavity_pinn.autodiff.TaylorTuple` values
and only use the arithmetic methods every tape exposes (``add``, ``sub``,
``mul``, ``square``, ``scale``).  With :data:`PLAIN` as the tape they evaluate
on ordinary floats or arrays, which is how the analytic field checks them.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from cavity_pinn.autodiff import PLAIN, TaylorTuple

RHO = 1.0


class LidProfile(enum.Enum):
    CONSTANT = "constant"
    REGULARIZED = "regularized"

    @classmethod
    def parse(cls, name: "str | LidProfile") -> "LidProfile":
        if isinstance(name, LidProfile):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            raise ValueError(f"unknown lid profile {name!r}; expected 'constant' or 'regularized'") from None

    def velocity(self, x):
        """Tangential lid velocity at abscissa ``x`` (scalar or array)."""
        x = np.asarray(x, dtype=float)
        if self is LidProfile.CONSTANT:
            out = np.ones_like(x)
        else:
            out = 16.0 * x**2 * (1.0 - x) ** 2
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FluidParams:
    re: float
    rho: float = RHO

    def __post_init__(self):
        if not self.re > 0 or not math.isfinite(self.re):
            raise ValueError(f"Reynolds number must be positive, got {self.re}")
        if not self.rho > 0:
            raise ValueError(f"density must be positive, got {self.rho}")

    @property
    def mu(self) -> float:
        return reynolds_to_viscosity(self.re, self.rho)


def reynolds_to_viscosity(re: float, rho: float = RHO) -> float:
    """Dynamic viscosity for unit velocity and length scales (Re = rho U L / mu)."""
    if not re > 0:
        raise ValueError(f"Reynolds number must be positive, got {re}")
    return rho / re


def continuity_residual(u_t: TaylorTuple, v_t: TaylorTuple):
    tape = u_t.tape
    return tape.add(u_t.dx, v_t.dy)


def momentum_residual(u_t: TaylorTuple, v_t: TaylorTuple, p_t: TaylorTuple, fluid):
    """x and y momentum residuals.

    ``fluid`` is a :class:`FluidParams` or, for batches spanning several
    Reynolds numbers, anything with ``mu``/``rho`` attributes where ``mu`` may
    be a per-point array.
    """
    tape = u_t.tape
    nu = fluid.mu / fluid.rho
    inv_rho = 1.0 / fluid.rho

    def one(c: TaylorTuple, dp):
        conv = tape.add(tape.mul(u_t.val, c.dx), tape.mul(v_t.val, c.dy))
        lap = tape.add(c.dxx, c.dyy)
        return tape.sub(tape.add(conv, tape.scale(dp, inv_rho)), tape.scale(lap, nu))

    return one(u_t, p_t.dx), one(v_t, p_t.dy)


@dataclass(frozen=True)
class ResidualBundle:
    r_cont: object
    r_momx: object
    r_momy: object


def residuals(u_t, v_t, p_t, fluid) -> ResidualBundle:
    mx, my = momentum_residual(u_t, v_t, p_t, fluid)
    return ResidualBundle(continuity_residual(u_t, v_t), mx, my)


# -- boundary ----------------------------------------------------------------

_EDGE_TOL = 1e-12


def boundary_target(x: float, y: float, lid: LidProfile) -> tuple[float, float]:
    """Prescribed wall velocity at a boundary point.

    Corners belong to the stationary walls, so the lid target only applies for
    0 < x < 1 on y = 1.
    """
    on_x = x <= _EDGE_TOL or x >= 1.0 - _EDGE_TOL
    on_y = y <= _EDGE_TOL or y >= 1.0 - _EDGE_TOL
    if not (on_x or on_y) or not (-_EDGE_TOL <= x <= 1 + _EDGE_TOL and -_EDGE_TOL <= y <= 1 + _EDGE_TOL):
        raise ValueError(f"point ({x}, {y}) is not on the boundary of the unit square")
    if y >= 1.0 - _EDGE_TOL and not on_x:
        return LidProfile.parse(lid).velocity(x), 0.0
    return 0.0, 0.0


def boundary_residual(u_pred: float, v_pred: float, point: tuple[float, float], lid: LidProfile):
    ug, vg = boundary_target(point[0], point[1], lid)
    return u_pred - ug, v_pred - vg


# -- manufactured Taylor-Green field -------------------------------------------

def manufactured_field(x, y, rho: float = RHO):
    """Steady Taylor-Green vortex with all derivative slots, as plain numbers.

    u = -cos x sin y, v = sin x cos y, p = -(rho/4)(cos 2x + cos 2y).  The
    field is divergence free, solves the Euler equations exactly and has
    lap(u) = -2u, lap(v) = -2v.
    Returns three :class:`TaylorTuple` on the :data:`PLAIN` tape.
    """
    cx, sx, cy, sy = np.cos(x), np.sin(x), np.cos(y), np.sin(y)
    u = TaylorTuple(PLAIN, -cx * sy, sx * sy, -cx * cy, cx * sy, cx * sy)
    v = TaylorTuple(PLAIN, sx * cy, cx * cy, -sx * sy, -sx * cy, -sx * cy)
    c2x, c2y = np.cos(2 * x), np.cos(2 * y)
    p = TaylorTuple(
        PLAIN,
        -0.25 * rho * (c2x + c2y),
        0.5 * rho * np.sin(2 * x),
        0.5 * rho * np.sin(2 * y),
        rho * c2x,
        rho * c2y,
    )
    return u, v, p
