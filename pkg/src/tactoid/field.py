"""Harmonic director angle on a graph domain.

The droplet ``{(x, y): 0 <= y <= f(x)}`` is mapped to the rectangle
``(xi, eta) in [x0, x1] x [0, 1]`` by ``y = eta * f(xi)``.  In these
coordinates the Dirichlet integrand is

    f * Theta_xi**2 - 2 eta f' Theta_xi Theta_eta + (1 + eta**2 f'**2) / f * Theta_eta**2

(the coefficient matrix has unit determinant).  We discretize this quadratic
form with bilinear elements on the tensor grid, treating ``f`` as the
piecewise-linear interpolant of its samples, so the assembled matrix is the
exact Gauss-quadrature energy of a bilinear field on the inscribed polygon.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import lapack

from .errors import DegenerateDomainError, DomainError, SolverFailure
from .geometry import GraphCurve, boundary_angle

logger = logging.getLogger(__name__)

DEFAULT_RESOLUTION = (513, 129)
DEFAULT_TOL = 1e-10
WIDTH_FLOOR = 1e-3

_GAUSS = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))
_GAUSS_PTS = [(p, q) for p in _GAUSS for q in _GAUSS]
# local node order: (0,0), (1,0), (0,1), (1,1) in (p, q)
_LOCAL = ((0, 0), (1, 0), (0, 1), (1, 1))


def _shape_derivs(p, q):
    dp = np.array([-(1 - q), (1 - q), -q, q])
    dq = np.array([-(1 - p), -p, (1 - p), p])
    return dp, dq


_TABLES = []
for _ip, _p in enumerate(_GAUSS):
    for _q in _GAUSS:
        _dp, _dq = _shape_derivs(_p, _q)
        _TABLES.append((_ip, _p, _q, _dp, _dq, np.outer(_dp, _dp),
                        np.outer(_dp, _dq) + np.outer(_dq, _dp), np.outer(_dq, _dq)))


def gauss_abscissae(xi: np.ndarray) -> np.ndarray:
    """The two Gauss points of every xi-cell, shape ``(n - 1, 2)``."""
    h = np.diff(xi)[:, None]
    return xi[:-1, None] + h * np.asarray(_GAUSS)[None, :]


@dataclass(frozen=True, eq=False)
class MappedGrid:
    """Tensor grid on the mapped rectangle; node ``(i, j)`` has index ``i * m + j``.

    ``fq``/``sq`` hold ``f`` and ``f'`` at the two Gauss abscissae of each
    xi-cell.  When omitted, the piecewise-linear interpolant of the nodal
    heights is used; that is only first-order accurate next to a quadratic
    zero of ``f``, so callers with an evaluator should supply them.
    """

    xi: np.ndarray
    eta: np.ndarray
    f: np.ndarray
    fq: Optional[np.ndarray] = None
    sq: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.fq is None:
            lin = np.stack([(1 - p) * self.f[:-1] + p * self.f[1:] for p in _GAUSS], axis=1)
            object.__setattr__(self, "fq", lin)
            object.__setattr__(self, "sq", np.repeat(self.secant[:, None], 2, axis=1))

    @property
    def shape(self):
        return self.xi.size, self.eta.size

    @property
    def hx(self):
        return np.diff(self.xi)

    @property
    def he(self):
        return np.diff(self.eta)

    @property
    def secant(self):
        return np.diff(self.f) / self.hx

    def node_index(self):
        n, m = self.shape
        return np.arange(n * m).reshape(n, m)

    def physical(self):
        """Node coordinates ``(x, y)`` as two ``(n, m)`` arrays."""
        X = np.broadcast_to(self.xi[:, None], self.shape)
        Y = self.f[:, None] * self.eta[None, :]
        return X, Y

    def gauss_coefficients(self):
        """Yield per-Gauss-point tables and ``(fg, eta_g, s)`` coefficient arrays."""
        for ip, p, q, dp, dq, P, Q, R in _TABLES:
            fg = self.fq[:, ip][:, None]
            s = self.sq[:, ip][:, None]
            eg = (self.eta[:-1] + q * self.he)[None, :]
            yield p, q, dp, dq, P, Q, R, fg, eg, s


def grid_for_curve(curve: GraphCurve, eta: np.ndarray) -> MappedGrid:
    """Mapped grid on the curve's samples with exact coefficients where available."""
    xg = gauss_abscissae(curve.x)
    fq = curve.evaluate(xg)
    sq = curve.evaluate_slope(xg)
    grid = MappedGrid(xi=curve.x, eta=eta, f=curve.f)
    # a spline through samples may undershoot near a cusp; keep the
    # interpolant in any cell where that happens
    bad = ~(np.isfinite(fq) & np.isfinite(sq) & (fq > 0))
    fq = np.where(bad, grid.fq, fq)
    sq = np.where(bad, grid.sq, sq)
    return MappedGrid(xi=curve.x, eta=eta, f=curve.f, fq=fq, sq=sq)


def assemble(grid: MappedGrid) -> sp.csr_matrix:
    """Stiffness matrix ``K`` with ``theta @ K @ theta`` equal to the Dirichlet energy."""
    n, m = grid.shape
    hx = grid.hx[:, None]
    he = grid.he[None, :]
    E = np.zeros((n - 1, m - 1, 4, 4))
    for p, q, dp, dq, P, Q, R, fg, eg, s in grid.gauss_coefficients():
        with np.errstate(divide="ignore", invalid="ignore"):
            k22 = np.where(fg > 0, (1 + eg**2 * s**2) / fg, 0.0)
        A = 0.25 * fg * he / hx
        B = -0.25 * eg * s
        C = 0.25 * k22 * hx / he
        E += A[..., None, None] * P + B[..., None, None] * Q + C[..., None, None] * R
    idx = grid.node_index()
    corners = np.stack([idx[:-1, :-1], idx[1:, :-1], idx[:-1, 1:], idx[1:, 1:]], axis=-1)
    rows = np.broadcast_to(corners[..., :, None], E.shape).ravel()
    cols = np.broadcast_to(corners[..., None, :], E.shape).ravel()
    K = sp.coo_matrix((E.ravel(), (rows, cols)), shape=(n * m, n * m)).tocsr()
    K.sum_duplicates()
    return K


def _cell_gradients(grid: MappedGrid, theta: np.ndarray, p, q):
    """``(Theta_xi, Theta_eta)`` at local point ``(p, q)`` of every cell."""
    t00, t10 = theta[:-1, :-1], theta[1:, :-1]
    t01, t11 = theta[:-1, 1:], theta[1:, 1:]
    hx = grid.hx[:, None]
    he = grid.he[None, :]
    txi = ((1 - q) * (t10 - t00) + q * (t11 - t01)) / hx
    teta = ((1 - p) * (t01 - t00) + p * (t11 - t10)) / he
    return txi, teta


# -- linear solve -------------------------------------------------------------

def _column_preconditioner(A: sp.csr_matrix, block: int):
    """Exact inverse of the within-column (eta-direction) couplings.

    With column-major blocks of equal size the kept part is one tridiagonal
    matrix, factored once with LAPACK ``gttrf``.
    """
    n = A.shape[0]
    d = A.diagonal().copy()
    off = A.diagonal(1).copy()
    # no coupling across block boundaries
    off[np.arange(1, n) % block == 0] = 0.0
    dl, dd, du, du2, ipiv, info = lapack.dgttrf(off.copy(), d, off.copy())
    if info != 0:
        raise SolverFailure("line preconditioner is singular", float("nan"), 0)

    def solve(r):
        x, info_ = lapack.dgttrs(dl, dd, du, du2, ipiv, np.asarray(r, dtype=float).copy())
        return x

    return spla.LinearOperator(A.shape, matvec=solve, dtype=float)


def pcg(A, b, M=None, tol: float = DEFAULT_TOL, maxiter: Optional[int] = None, x0=None):
    """Preconditioned conjugate gradients to relative residual ``tol``.

    Returns ``(x, relres, iterations)``; raises ``SolverFailure`` at the cap.
    """
    n = b.size
    maxiter = maxiter or 50 * n
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n), 0.0, 0
    r = b - A @ x
    z = r if M is None else M @ r
    p = z.copy()
    rz = float(r @ z)
    relres = float(np.linalg.norm(r)) / bnorm
    it = 0
    while relres > tol:
        if it >= maxiter:
            raise SolverFailure("CG did not converge", relres, it)
        Ap = A @ p
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        relres = float(np.linalg.norm(r)) / bnorm
        it += 1
        z = r if M is None else M @ r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, relres, it


def solve_dirichlet(grid: MappedGrid, fixed: np.ndarray, values: np.ndarray,
                    tol: float = DEFAULT_TOL, method: str = "direct",
                    K: Optional[sp.csr_matrix] = None):
    """Minimize the discrete energy with ``theta[fixed] = values[fixed]``.

    ``method`` is ``"direct"`` (sparse LU, then the residual is checked) or
    ``"cg"`` (conjugate gradients with an eta-line preconditioner; slower on
    wide droplets, where the xi-couplings dominate).
    Returns ``(theta, K, relres, iterations)``.
    """
    n, m = grid.shape
    K = assemble(grid) if K is None else K
    fixed_flat = fixed.ravel()
    free = np.flatnonzero(~fixed_flat)
    theta = np.where(fixed, values, 0.0).ravel().astype(float)
    if free.size == 0:
        return theta.reshape(n, m), K, 0.0, 0
    Kff = K[free][:, free].tocsr()
    rhs = -(K[free] @ theta)
    if method == "direct":
        # the matrix is symmetric: a symmetric minimum-degree ordering
        # fills in far less than the default column ordering
        lu = spla.splu(Kff.tocsc(), permc_spec="MMD_AT_PLUS_A",
                       options=dict(SymmetricMode=True))
        sol = lu.solve(rhs)
        bn = np.linalg.norm(rhs)
        relres = float(np.linalg.norm(Kff @ sol - rhs) / bn) if bn > 0 else 0.0
        if relres > max(tol, 1e-8):
            raise SolverFailure("direct solve inaccurate", relres, 1)
        its = 1
    elif method == "cg":
        # free nodes are whole column segments, so blocks stay within columns
        free_cols = free // m
        starts = np.flatnonzero(np.diff(np.concatenate([[-1], free_cols])))
        sizes = np.diff(np.concatenate([starts, [free.size]]))
        if np.all(sizes == sizes[0]):
            M = _column_preconditioner(Kff, int(sizes[0]))
        else:
            d = Kff.diagonal()
            M = spla.LinearOperator(Kff.shape, matvec=lambda v: v / d, dtype=float)
        sol, relres, its = pcg(Kff, rhs, M=M, tol=tol, maxiter=50 * n * m)
    else:
        raise DomainError(f"unknown method {method!r}")
    theta[free] = sol
    return theta.reshape(n, m), K, relres, its


# -- angle field on a droplet -------------------------------------------------

@dataclass(frozen=True, eq=False)
class AngleField:
    """Solved (or prescribed) angle on the mapped droplet grid."""

    grid: MappedGrid
    theta: np.ndarray
    slope: np.ndarray
    clip_margin: int
    curve: Optional[GraphCurve] = None
    residual: float = 0.0
    iterations: int = 0
    K: Optional[sp.csr_matrix] = field(default=None, repr=False)
    fixed: Optional[np.ndarray] = field(default=None, repr=False)
    convention: str = "arctan"

    @property
    def resolution(self):
        return self.grid.shape

    @property
    def xi(self):
        return self.grid.xi

    @property
    def eta(self):
        return self.grid.eta

    def stiffness(self):
        return assemble(self.grid) if self.K is None else self.K


# a positive-width domain with arbitrary data uses the same container
TestDomainField = AngleField


def default_clip_margin(f: np.ndarray, floor: float = WIDTH_FLOOR) -> int:
    """Number of end columns (per side) whose height is below ``floor * max f``."""
    thin = f < floor * f.max()
    n = f.size
    left = int(np.argmin(thin)) if not thin.all() else n
    right = int(np.argmin(thin[::-1])) if not thin.all() else n
    return max(left, right, 1)


def _prepare_curve(curve: GraphCurve, resolution) -> GraphCurve:
    n_xi = int(resolution[0])
    if n_xi != curve.n:
        curve = curve.resampled(n_xi)
    return curve


def _check_resolution(resolution):
    n_xi, n_eta = int(resolution[0]), int(resolution[1])
    if n_xi < 33 or n_eta < 17:
        raise DomainError(f"resolution must be at least 33 x 17, got {n_xi} x {n_eta}")
    return n_xi, n_eta


def solve_harmonic(curve: GraphCurve, resolution=None, tolerance: float = DEFAULT_TOL,
                   clip_margin: Optional[int] = None, method: str = "direct",
                   convention: str = "arctan") -> AngleField:
    """Harmonic angle with anchoring data: 0 on the base, ``arctan f'`` on the curve.

    The first/last ``clip_margin`` columns (where the droplet is thinner than
    ``WIDTH_FLOOR`` times its height) get the linear-in-eta interpolant of
    their two boundary values instead of a solved value.
    """
    if resolution is None:
        resolution = (curve.n, DEFAULT_RESOLUTION[1])
    if not tolerance > 0:
        raise DomainError("tolerance must be positive")
    n_xi, n_eta = _check_resolution(resolution)
    curve = _prepare_curve(curve, resolution)
    trace = boundary_angle(curve, convention).curve
    slope = curve.slope()
    margin = default_clip_margin(curve.f) if clip_margin is None else int(clip_margin)
    margin = max(margin, 1)
    auto = default_clip_margin(curve.f)
    if auto > max(margin, n_xi // 4):
        raise DegenerateDomainError(
            f"{auto} columns per end fall below the width floor; raise the resolution")
    if 2 * margin >= n_xi - 2:
        raise DegenerateDomainError("clip margin leaves no interior columns")
    eta = np.linspace(0.0, 1.0, n_eta)
    grid = grid_for_curve(curve, eta)
    fixed = np.zeros((n_xi, n_eta), dtype=bool)
    fixed[:, 0] = fixed[:, -1] = True
    fixed[:margin, :] = fixed[-margin:, :] = True
    values = trace[:, None] * eta[None, :]
    theta, K, relres, its = solve_dirichlet(grid, fixed, values, tolerance, method)
    logger.debug("harmonic solve %dx%d: %d iterations, residual %.2e", n_xi, n_eta, its, relres)
    return AngleField(grid, theta, slope, margin, curve, relres, its, K, fixed, convention)


def linear_extension_field(curve: GraphCurve, resolution=None, convention: str = "arctan",
                           clip_margin: Optional[int] = None) -> AngleField:
    """The explicit extension ``Theta = eta * Theta_boundary(xi)`` on the same grid."""
    if resolution is None:
        resolution = (curve.n, DEFAULT_RESOLUTION[1])
    n_xi, n_eta = _check_resolution(resolution)
    curve = _prepare_curve(curve, resolution)
    trace = boundary_angle(curve, convention).curve
    eta = np.linspace(0.0, 1.0, n_eta)
    grid = grid_for_curve(curve, eta)
    margin = default_clip_margin(curve.f) if clip_margin is None else int(clip_margin)
    return AngleField(grid, trace[:, None] * eta[None, :], curve.slope(), max(margin, 1),
                      curve, convention=convention)


def solve_test_domain(x, f, data: Callable, n_eta: int, tolerance: float = DEFAULT_TOL,
                      method: str = "direct") -> AngleField:
    """Harmonic function on ``{0 <= y <= f(x)}`` (``f > 0``) with data ``data(x, y)`` on all sides."""
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise DegenerateDomainError("test domains need positive width everywhere")
    eta = np.linspace(0.0, 1.0, n_eta)
    grid = MappedGrid(xi=x, eta=eta, f=f)
    X, Y = grid.physical()
    values = data(X, Y)
    fixed = np.zeros(grid.shape, dtype=bool)
    fixed[0, :] = fixed[-1, :] = fixed[:, 0] = fixed[:, -1] = True
    theta, K, relres, its = solve_dirichlet(grid, fixed, values, tolerance, method)
    slope = np.gradient(f, x, edge_order=2)
    return AngleField(grid, theta, slope, 0, None, relres, its, K, fixed)


def dirichlet_energy(field_: AngleField) -> float:
    """``int |grad Theta|^2`` of the bilinear field (same quadrature as the solver)."""
    th = field_.theta.ravel()
    return float(max(th @ (field_.stiffness() @ th), 0.0))


def energy_density_integral(field_: AngleField) -> float:
    """Same energy, evaluated cell by cell from the transformed integrand."""
    g = field_.grid
    total = 0.0
    hx = g.hx[:, None]
    he = g.he[None, :]
    for p, q, dp, dq, P, Q, R, fg, eg, s in g.gauss_coefficients():
        txi, teta = _cell_gradients(g, field_.theta, p, q)
        with np.errstate(divide="ignore", invalid="ignore"):
            dens = fg * txi**2 - 2 * eg * s * txi * teta + np.where(
                fg > 0, (1 + eg**2 * s**2) / fg, 0.0) * teta**2
        total += float(np.sum(0.25 * dens * hx * he))
    return total


@dataclass(frozen=True)
class DtNTrace:
    """Boundary quantities on the curved part, per sample.

    ``valid`` is False on clipped end columns, where values come from the
    imposed interpolant rather than the solve.
    """

    x: np.ndarray
    dn: np.ndarray
    theta_x: np.ndarray
    theta_y: np.ndarray
    theta: np.ndarray
    slope: np.ndarray
    valid: np.ndarray

    @property
    def grad_sq(self):
        return self.theta_x**2 + self.theta_y**2

    @property
    def speed(self):
        return np.sqrt(1.0 + self.slope**2)


def dtn_trace(field_: AngleField) -> DtNTrace:
    """Outward normal derivative on the curve from a one-sided second-order eta stencil."""
    g = field_.grid
    n, m = g.shape
    if m < 4:
        raise DomainError("need at least 4 eta levels for the boundary stencil")
    th = field_.theta
    he = g.he[-1]
    t_eta = (3 * th[:, -1] - 4 * th[:, -2] + th[:, -3]) / (2 * he)
    top = th[:, -1]
    t_xi = np.gradient(top, g.xi, edge_order=2)
    fp = field_.slope
    f = g.f
    with np.errstate(divide="ignore", invalid="ignore"):
        ty = np.where(f > 0, t_eta / f, np.nan)
        tx = t_xi - fp * ty
        dn = (-fp * tx + ty) / np.sqrt(1 + fp**2)
    valid = np.ones(n, dtype=bool)
    k = field_.clip_margin
    if k:
        valid[:k] = valid[-k:] = False
    valid &= f > 0
    return DtNTrace(g.xi.copy(), dn, tx, ty, top.copy(), fp, valid)


def green_identity_defect(field_: AngleField, trace: Optional[DtNTrace] = None) -> float:
    """``|int_Gamma Theta dTheta/dnu - int |grad Theta|^2| / int |grad Theta|^2``."""
    tr = dtn_trace(field_) if trace is None else trace
    # clipped columns carry energy too, so they stay in the flux integral;
    # only the collapsed end points (f = 0) are dropped
    integrand = tr.theta * tr.dn * tr.speed
    integrand = np.where(np.isfinite(integrand), integrand, 0.0)
    flux = float(np.sum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(tr.x)))
    D = dirichlet_energy(field_)
    if D == 0:
        return abs(flux)
    return abs(flux - D) / D


def boundary_flux(field_: AngleField) -> np.ndarray:
    """Discrete Dirichlet-to-Neumann values: ``(K theta)`` at the fixed nodes, per node."""
    K = field_.stiffness()
    return (K @ field_.theta.ravel()).reshape(field_.grid.shape)


def write_field_csv(field_: AngleField, path) -> None:
    X, _ = field_.grid.physical()
    E = np.broadcast_to(field_.grid.eta[None, :], field_.grid.shape)
    data = np.column_stack([X.ravel(), E.ravel(), field_.theta.ravel()])
    np.savetxt(path, data, delimiter=",", header="xi,eta,theta", comments="", fmt="%.17g")


def field_metadata(field_: AngleField) -> dict:
    return {
        "resolution": list(field_.resolution),
        "clip_margin": int(field_.clip_margin),
        "residual": float(field_.residual),
        "iterations": int(field_.iterations),
        "convention": field_.convention,
    }
