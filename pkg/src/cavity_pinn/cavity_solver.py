"""Reference steady lid-driven cavity solver (streamfunction-vorticity, finite differences).

Grid: uniform n x n nodes including the walls, x_i = i/(n-1), y_j = j/(n-1).
Arrays are indexed ``[j, i]`` (row = y, column = x).

The steady equations

    lap(psi) = -omega
    u omega_x + v omega_y = (1/Re) lap(omega),   u = psi_y, v = -psi_x

are discretised with second-order central differences and Thom's first-order
wall vorticity, and the coupled nonlinear system is solved by Newton's method
with a sparse direct factorisation at each step.  The first Newton step from
rest is the Stokes solution.  Pressure is recovered afterwards from a Neumann
pressure Poisson problem built from the momentum balance of the converged
velocity, fixed to zero mean.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RectBivariateSpline
from scipy.sparse.linalg import spsolve

from cavity_pinn.physics import LidProfile, reynolds_to_viscosity

log = logging.getLogger(__name__)

MAX_RE = 1000.0


class NonConvergenceError(RuntimeError):
    def __init__(self, message: str, history: list[float]):
        super().__init__(message)
        self.history = list(history)


class ResolutionError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    n: int = 129
    re: float = 100.0
    lid: LidProfile = LidProfile.REGULARIZED
    tol: float = 1e-8
    max_iters: int = 40

    def __post_init__(self):
        object.__setattr__(self, "lid", LidProfile.parse(self.lid))
        if int(self.n) != self.n or self.n < 17:
            raise ValueError(f"grid size must be an integer >= 17, got {self.n}")
        if not 0 < self.re <= MAX_RE:
            raise ValueError(f"Reynolds number must be in (0, {MAX_RE:g}], got {self.re}")
        if not self.tol > 0:
            raise ValueError(f"tolerance must be positive, got {self.tol}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class FlowField:
    n: int
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    re: float = float("nan")
    lid: LidProfile = LidProfile.REGULARIZED
    history: list[float] = field(default_factory=list, repr=False)

    @property
    def coords(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates as two [j, i] arrays."""
        c = self.coords
        x, y = np.meshgrid(c, c, indexing="xy")
        return x, y

    def value_at_center(self, name: str) -> float:
        """Value of ``name`` at (0.5, 0.5); exact node for odd n, else bicubic."""
        arr = getattr(self, name)
        if self.n % 2 == 1:
            c = self.n // 2
            return float(arr[c, c])
        spline = RectBivariateSpline(self.coords, self.coords, arr, kx=3, ky=3, s=0)
        return float(spline(0.5, 0.5)[0, 0])


def _operators(n: int):
    h = 1.0 / (n - 1)
    e = np.ones(n)
    d1 = sp.diags([-e[:-1], e[:-1]], [-1, 1], shape=(n, n), format="lil") / (2 * h)
    l1 = sp.diags([e[:-1], -2 * e, e[:-1]], [-1, 0, 1], shape=(n, n), format="lil") / h**2
    for m in (d1, l1):
        m[0, :] = 0
        m[n - 1, :] = 0
    eye = sp.identity(n, format="csr")
    d1, l1 = d1.tocsr(), l1.tocsr()
    dx = sp.kron(eye, d1, format="csr")
    dy = sp.kron(d1, eye, format="csr")
    lap = (sp.kron(eye, l1) + sp.kron(l1, eye)).tocsr()
    return h, dx, dy, lap


def _masks(n: int):
    j, i = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    on_x = (i == 0) | (i == n - 1)
    on_y = (j == 0) | (j == n - 1)
    corner = (on_x & on_y).ravel()
    boundary = (on_x | on_y).ravel()
    return ~boundary, boundary, corner


def _wall_neighbours(n: int):
    """For every non-corner wall node: (node, adjacent interior node, is_lid)."""
    rows, adj, lid = [], [], []
    for k in range(1, n - 1):
        rows += [0 * n + k, (n - 1) * n + k, k * n + 0, k * n + (n - 1)]
        adj += [1 * n + k, (n - 2) * n + k, k * n + 1, k * n + (n - 2)]
        lid += [False, True, False, False]
    return np.array(rows), np.array(adj), np.array(lid)


def _corner_neighbours(n: int):
    corners = [(0, 0), (0, n - 1), (n - 1, 0), (n - 1, n - 1)]
    rows, nbrs = [], []
    for j, i in corners:
        k = j * n + i
        jj = 1 if j == 0 else n - 2
        ii = 1 if i == 0 else n - 2
        rows.append(k)
        nbrs.append((jj * n + i, j * n + ii))
    return np.array(rows), np.array(nbrs)


def solve_cavity(cfg: SolverConfig) -> FlowField:
    n = cfg.n
    N = n * n
    h, Dx, Dy, L = _operators(n)
    interior, boundary, corner = _masks(n)
    walls, adj, is_lid = _wall_neighbours(n)
    corners, corner_nbrs = _corner_neighbours(n)
    x = np.linspace(0.0, 1.0, n)
    lid_u = np.zeros(N)
    # lid node (n-1, i) for 0 < i < n-1; corners stay on the walls
    lid_u[(n - 1) * n + np.arange(1, n - 1)] = cfg.lid.velocity(x[1:-1])

    S_int = sp.diags(interior.astype(float))
    S_bnd = sp.diags(boundary.astype(float))
    # Thom: omega_w + 2 psi_adj / h^2 + 2 U_w / h = 0
    thom_psi = sp.csr_matrix((np.full(len(walls), 2.0 / h**2), (walls, adj)), shape=(N, N))
    thom_const = np.zeros(N)
    thom_const[walls] = 2.0 * lid_u[walls] / h
    wall_eye = sp.csr_matrix((np.ones(len(walls)), (walls, walls)), shape=(N, N))
    c_rows = np.concatenate([corners, corners, corners])
    c_cols = np.concatenate([corners, corner_nbrs[:, 0], corner_nbrs[:, 1]])
    c_vals = np.concatenate([np.ones(4), -0.5 * np.ones(4), -0.5 * np.ones(4)])
    corner_op = sp.csr_matrix((c_vals, (c_rows, c_cols)), shape=(N, N))

    A11 = (S_int @ L + S_bnd).tocsr()
    A12 = S_int.tocsr()
    omega_bc = (wall_eye + corner_op).tocsr()

    def newton(re, psi, om, history):
        nu = reynolds_to_viscosity(re)
        stokes22 = (S_int @ (-nu * L)).tocsr()

        def residual(psi, om):
            u, v = Dy @ psi, -(Dx @ psi)
            r1 = np.where(interior, L @ psi + om, psi)
            r2 = np.where(interior, u * (Dx @ om) + v * (Dy @ om) - nu * (L @ om), 0.0)
            r2 = r2 + omega_bc @ om + thom_psi @ psi + thom_const
            return np.concatenate([r1, r2])

        for it in range(cfg.max_iters):
            u, v = Dy @ psi, -(Dx @ psi)
            A21 = (S_int @ (sp.diags(Dx @ om) @ Dy - sp.diags(Dy @ om) @ Dx) + thom_psi).tocsr()
            A22 = (S_int @ (sp.diags(u) @ Dx + sp.diags(v) @ Dy) + stokes22 + omega_bc).tocsr()
            J = sp.bmat([[A11, A12], [A21, A22]], format="csc")
            delta = spsolve(J, -residual(psi, om))
            if not np.all(np.isfinite(delta)):
                return None
            psi = psi + delta[:N]
            om = om + delta[N:]
            step = float(np.max(np.abs(delta)))
            history.append(step)
            log.debug("Re=%g newton iter %d: max update %.3e", re, it + 1, step)
            if step < cfg.tol:
                return psi, om
            # a Newton step that grows well past the first one is not going to settle
            if it >= 2 and step > 10.0 * max(history[-it - 1], 1.0):
                return None
        return None

    # Newton from rest, with Reynolds continuation when the direct attempt fails
    psi, om = np.zeros(N), np.zeros(N)
    history: list[float] = []
    reached, dre = 0.0, float(cfg.re)
    while reached < cfg.re:
        target = min(cfg.re, reached + dre)
        out = newton(target, psi, om, history)
        if out is None:
            dre /= 2.0
            if dre < 1.0:
                raise NonConvergenceError(
                    f"no convergence to tol={cfg.tol:g} at Re={target:g} "
                    f"(last update {history[-1]:.3e})",
                    history,
                )
            log.info("continuation: retrying with Re step %g from Re=%g", dre, reached)
            continue
        psi, om = out
        reached = target

    nu = reynolds_to_viscosity(cfg.re)
    u = np.where(interior, Dy @ psi, lid_u)
    v = np.where(interior, -(Dx @ psi), 0.0)
    u2, v2 = u.reshape(n, n), v.reshape(n, n)
    p = _pressure(u2, v2, nu, h)
    return FlowField(n=n, u=u2, v=v2, p=p, re=float(cfg.re), lid=cfg.lid, history=history)


def _second_derivative(a: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Central second difference, one-sided second-order at the two ends."""
    a = np.moveaxis(a, axis, 0)
    out = np.empty_like(a)
    out[1:-1] = (a[2:] - 2.0 * a[1:-1] + a[:-2]) / h**2
    out[0] = (2.0 * a[0] - 5.0 * a[1] + 4.0 * a[2] - a[3]) / h**2
    out[-1] = (2.0 * a[-1] - 5.0 * a[-2] + 4.0 * a[-3] - a[-4]) / h**2
    return np.moveaxis(out, 0, axis)


def _pressure(u: np.ndarray, v: np.ndarray, nu: float, h: float) -> np.ndarray:
    """Pressure whose edge differences best match the momentum balance.

    F = -(u.grad)u + nu lap(u) is evaluated at every node, walls included.
    Each grid edge asks p[b] - p[a] = h (F[a] + F[b]) / 2 along its direction
    and p is the least-squares fit with zero mean.  The normal equations are
    the 5-point Neumann Poisson problem lap(p) = div F, whose wall data is the
    normal component of F; being a least-squares system it is always
    compatible, so no source correction is needed.
    """
    n = u.shape[0]
    N = n * n
    ux = np.gradient(u, h, axis=1, edge_order=2)
    uy = np.gradient(u, h, axis=0, edge_order=2)
    vx = np.gradient(v, h, axis=1, edge_order=2)
    vy = np.gradient(v, h, axis=0, edge_order=2)
    fx = -(u * ux + v * uy) + nu * (_second_derivative(u, h, 1) + _second_derivative(u, h, 0))
    fy = -(u * vx + v * vy) + nu * (_second_derivative(v, h, 1) + _second_derivative(v, h, 0))

    idx = np.arange(N).reshape(n, n)
    tail = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    head = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    target = 0.5 * h * np.concatenate(
        [(fx[:, :-1] + fx[:, 1:]).ravel(), (fy[:-1, :] + fy[1:, :]).ravel()]
    )
    m = tail.size
    rows = np.concatenate([np.arange(m), np.arange(m)])
    G = sp.csr_matrix(
        (np.concatenate([np.ones(m), -np.ones(m)]), (rows, np.concatenate([head, tail]))),
        shape=(m, N),
    )
    ones = sp.csr_matrix(np.ones((N, 1)))
    K = sp.bmat([[(G.T @ G).tocsr(), ones], [ones.T, None]], format="csc")
    sol = spsolve(K, np.concatenate([G.T @ target, [0.0]]))
    p = sol[:N].reshape(n, n)
    return p - p.mean()


def boundary_values(n: int, lid: LidProfile) -> tuple[np.ndarray, np.ndarray]:
    """Wall velocities on an n x n node grid (interior entries are zero)."""
    u = np.zeros((n, n))
    x = np.linspace(0.0, 1.0, n)
    u[n - 1, 1:-1] = LidProfile.parse(lid).velocity(x[1:-1])
    return u, np.zeros((n, n))


def sample_to_grid(field: FlowField, m: int) -> FlowField:
    """Bicubic resampling of a solved field onto a uniform m x m node grid."""
    if m > field.n:
        raise ResolutionError(f"cannot sample {m}x{m} from a {field.n}x{field.n} field")
    if m < 2:
        raise ResolutionError(f"target grid must have at least 2 points per side, got {m}")
    if m == field.n:
        return FlowField(field.n, field.u.copy(), field.v.copy(), field.p.copy(), field.re, field.lid)
    src = field.coords
    dst = np.linspace(0.0, 1.0, m)
    out = {}
    for name in ("u", "v", "p"):
        spline = RectBivariateSpline(src, src, getattr(field, name), kx=3, ky=3, s=0)
        out[name] = spline(dst, dst)
    ub, vb = boundary_values(m, field.lid)
    edge = np.zeros((m, m), dtype=bool)
    edge[0, :] = edge[-1, :] = edge[:, 0] = edge[:, -1] = True
    out["u"] = np.where(edge, ub, out["u"])
    out["v"] = np.where(edge, vb, out["v"])
    return FlowField(m, out["u"], out["v"], out["p"], field.re, field.lid)


def discrete_divergence(field: FlowField) -> np.ndarray:
    """Central-difference divergence at nodes whose stencil only touches interior velocities.

    Velocities at interior nodes are central differences of the streamfunction,
    so the discrete divergence there vanishes to round-off; wall nodes carry the
    prescribed boundary values instead, hence the one-node margin.
    """
    h = 1.0 / (field.n - 1)
    u, v = field.u, field.v
    ux = (u[2:-2, 3:-1] - u[2:-2, 1:-3]) / (2 * h)
    vy = (v[3:-1, 2:-2] - v[1:-3, 2:-2]) / (2 * h)
    return ux + vy
