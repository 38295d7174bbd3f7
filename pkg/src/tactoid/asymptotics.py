"""Large- and small-volume limits.

* Large volume: the semicircle with two circular-arc cusps added at its ends
  (``cusped_semicircle``) is an upper-bound family for ``E_v`` when
  ``eps = v**(-1/4)``; its energies approach ``sqrt(2 pi)``.
* Small volume: on thin droplets the Dirichlet energy is proportional to the
  volume, the physical energy at volume ``eps**2`` scales like
  ``eps**(2/3)``, and the compressed functional ``E_eps`` converges to
  ``E0``, whose minimizer is ``g(x) = pi**(-4/3) (1 + cos pi x) / 2``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import energy as en
from .errors import DomainError
from .field import dirichlet_energy, linear_extension_field, solve_harmonic
from .geometry import GraphCurve, _gauss_panels, cosine_bump, perimeter

SQRT_2PI = math.sqrt(2.0 * math.pi)
PROFILE_COEFFICIENT = math.pi ** (-2.0 / 3.0)
UNDER_RESOLVED_GAP = 0.1


# -- curves ----------------------------------------------------------------------

class _CuspedPieces:
    """Height and its first two derivatives for the cusped semicircle on ``[-1, 1]``."""

    def __init__(self, eps: float):
        if not 0.0 < eps < 0.25:
            raise DomainError(f"eps must lie in (0, 1/4), got {eps}")
        self.eps = eps
        self.r = eps / (1.0 - eps)
        self.s = math.sqrt((1.0 + eps) / (1.0 - eps))
        self.junction = math.sqrt(1.0 - eps * eps)  # before the horizontal rescale

    def _split(self, x):
        X = self.s * np.abs(np.asarray(x, dtype=float))
        return X, X <= self.junction

    def f(self, x):
        X, mid = self._split(x)
        r, s = self.r, self.s
        inner = np.sqrt(np.clip(1.0 - X * X, 0.0, None))
        outer = r - np.sqrt(np.clip(r * r - (s - X) ** 2, 0.0, None))
        return np.where(mid, inner, outer)

    def df(self, x):
        x = np.asarray(x, dtype=float)
        X, mid = self._split(x)
        r, s = self.r, self.s
        with np.errstate(divide="ignore", invalid="ignore"):
            inner = -X / np.sqrt(np.clip(1.0 - X * X, 1e-300, None))
            outer = -(s - X) / np.sqrt(np.clip(r * r - (s - X) ** 2, 1e-300, None))
        return np.sign(x) * self.s * np.where(mid, inner, outer)

    def d2f(self, x):
        X, mid = self._split(x)
        r, s = self.r, self.s
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            inner = -np.clip(1.0 - X * X, 1e-300, None) ** -1.5
            outer = r * r * np.clip(r * r - (s - X) ** 2, 1e-300, None) ** -1.5
        return self.s ** 2 * np.where(mid, inner, outer)

    def breakpoints(self):
        xj = self.junction / self.s
        return [-1.0, -xj, 0.0, xj, 1.0]

    def integrate(self, fn) -> float:
        from scipy.integrate import quad

        pts = self.breakpoints()
        return sum(quad(lambda x: float(fn(np.array(x))), lo, hi, limit=400,
                        epsabs=1e-12, epsrel=1e-12)[0] for lo, hi in zip(pts[:-1], pts[1:]))


def cusped_semicircle(eps: float, n: int = 1025, grid: str = "arclength") -> GraphCurve:
    """Unit semicircle with its ends replaced by tangent arcs of radius ``eps/(1-eps)``.

    Before rescaling the middle piece is ``sqrt(1 - x^2)`` for
    ``|x| <= sqrt(1 - eps^2)`` and the end pieces are the lower halves of the
    circles of radius ``r = eps/(1-eps)`` centred at ``(+-s, r)`` with
    ``s = sqrt((1+eps)/(1-eps))``; the result is compressed horizontally by
    ``s`` onto ``[-1, 1]``.  The default stations equidistribute arc length
    (blended with cosine clustering) so the near-vertical stretch next to each
    junction is resolved.
    """
    p = _CuspedPieces(eps)
    curve = GraphCurve.from_function(p.f, p.df, a=1.0, n=n, grid="cosine", name=f"cusped:{eps:g}")
    return curve if grid == "cosine" else curve.resampled(n, grid)


def cusped_exact(eps: float) -> dict:
    """Quadrature values for the cusped semicircle: area, length, ``F`` and the
    Dirichlet energy of the linear-in-height field ``arctan(f') y / f``.

    The field's energy reduces to
    ``int (f/3) (a' - a f'/f)^2 + a^2 / f dx`` with ``a = arctan f'``.
    """
    p = _CuspedPieces(eps)

    def lin(x):
        f, d1, d2 = p.f(x), p.df(x), p.d2f(x)
        a = np.arctan(d1)
        da = d2 / (1.0 + d1 * d1)
        return f / 3.0 * (da - a * d1 / f) ** 2 + a * a / f

    area = p.integrate(p.f)
    length = p.integrate(lambda x: np.sqrt(1.0 + p.df(x) ** 2))
    return {"eps": eps, "area": area, "length": length, "F": length / math.sqrt(area),
            "linear_dirichlet": p.integrate(lin)}


def witness_curve(eps: float, n: int = 1025) -> GraphCurve:
    """``eps (1 + cos pi x) / 2`` on ``[-1, 1]`` (area ``eps``)."""
    return cosine_bump(n, amplitude=eps)


def profile_g(n: int = 1025) -> GraphCurve:
    """The small-volume profile ``g = pi^(-4/3) (1 + cos pi x) / 2``."""
    c = GraphCurve.from_spectral([PROFILE_COEFFICIENT], 1.0, n, name="profile_g")
    return c


# -- fits --------------------------------------------------------------------------

@dataclass
class ExponentFit:
    slope: float
    intercept: float
    stderr: float
    residual: float
    endpoint_slope: float
    points: int
    under_resolved: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def fit_exponent(x: Sequence[float], y: Sequence[float]) -> ExponentFit:
    """Least-squares slope of ``log y`` against ``log x`` plus the endpoint-pair slope.

    Needs at least 4 positive points.  ``under_resolved`` is set when the two
    slopes differ by more than 0.1.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 4:
        raise DomainError("an exponent fit needs at least 4 points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("log-log fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    res = ly - A @ coef
    dof = max(x.size - 2, 1)
    sigma2 = float(res @ res) / dof
    cov = sigma2 * np.linalg.inv(A.T @ A)
    order = np.argsort(lx)
    i0, i1 = order[0], order[-1]
    end = float((ly[i1] - ly[i0]) / (lx[i1] - lx[i0]))
    slope = float(coef[0])
    return ExponentFit(slope, float(coef[1]), float(math.sqrt(cov[0, 0])),
                       float(np.sqrt(np.mean(res ** 2))), end, int(x.size),
                       abs(slope - end) > UNDER_RESOLVED_GAP)


# -- sweep result -----------------------------------------------------------------

@dataclass
class SweepResult:
    kind: str
    parameter: str
    values: list
    reports: list
    target: Optional[float] = None
    gaps: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "parameter": self.parameter,
            "values": list(self.values),
            "reports": self.reports,
            "target": self.target,
            "gaps": list(self.gaps),
            "fits": {k: (v.to_dict() if isinstance(v, ExponentFit) else v)
                     for k, v in self.fits.items()},
            "extras": self.extras,
        }

    def to_csv(self) -> str:
        lines = ["param,dirichlet,perimeter,total,gap"]
        for i, p in enumerate(self.values):
            rep = self.reports[i]
            gap = self.gaps[i] if i < len(self.gaps) else float("nan")
            lines.append(f"{p:.17g},{rep['dirichlet']:.17g},{rep['perimeter_term']:.17g},"
                         f"{rep['total']:.17g},{gap:.17g}")
        return "\n".join(lines) + "\n"


def _map(fn: Callable, items: Sequence, workers: int):
    """Order-preserving map, optionally over a process pool."""
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# -- large volume -------------------------------------------------------------------

def _large_point(args):
    v, resolution = args
    eps = v ** -0.25
    curve = cusped_semicircle(eps, resolution[0])
    rep = en.E_v(curve, v, resolution).to_dict()
    exact = cusped_exact(eps)
    rep["extras"]["exact"] = exact
    rep["extras"]["upper_bound"] = exact["linear_dirichlet"] / math.sqrt(v) + exact["F"]
    return rep


def large_volume_sweep(v_list: Sequence[float], resolution=(1025, 257),
                       optimized: Optional[dict] = None, workers: int = 1) -> SweepResult:
    """``E_v`` on the cusped semicircle with ``eps = v^(-1/4)``.

    Two energies per point: the harmonic value ``E_v`` (grid solve) and the
    upper bound obtained from the linear-in-height test field
    ``arctan(f') y / f``, whose Dirichlet energy is ``O(1/eps)`` so that both
    parts of its gap to ``sqrt(2 pi)`` are ``O(v^(-1/4))``.  ``gaps`` holds the
    upper-bound gaps; the harmonic gaps sit in ``extras``.  Fits: the two gaps
    against ``v`` and ``F - sqrt(2 pi)`` against ``eps``.
    ``optimized`` maps ``v`` to an optimized curve; those are evaluated too.
    """
    v_list = [float(v) for v in v_list]
    if any(v < 1 for v in v_list):
        raise DomainError("large-volume sweep needs v >= 1")
    if any(v ** -0.25 >= 0.25 for v in v_list):
        raise DomainError("v must exceed 256 so that eps = v^(-1/4) < 1/4")
    reports = _map(_large_point, [(v, tuple(resolution)) for v in v_list], workers)
    eps = [v ** -0.25 for v in v_list]
    gaps = [r["extras"]["upper_bound"] - SQRT_2PI for r in reports]
    harmonic_gaps = [r["total"] - SQRT_2PI for r in reports]
    f_gaps = [r["extras"]["exact"]["F"] - SQRT_2PI for r in reports]
    fits = {}
    if len(v_list) >= 4:
        fits["gap_vs_v"] = fit_exponent(v_list, gaps)
        fits["harmonic_gap_vs_v"] = fit_exponent(v_list, harmonic_gaps)
        fits["perimeter_gap_vs_eps"] = fit_exponent(eps, f_gaps)
    extras = {"eps": eps, "harmonic_gaps": harmonic_gaps, "perimeter_gaps": f_gaps}
    if optimized:
        opt = {}
        for v, curve in optimized.items():
            rep = en.E_v(curve, float(v), resolution)
            opt[repr(float(v))] = {"report": rep.to_dict(), "gap": rep.total - SQRT_2PI,
                                   "F": rep.perimeter_term}
        extras["optimized"] = opt
    return SweepResult("large_volume", "v", v_list, reports, SQRT_2PI, gaps, fits, extras)


# -- small volume ---------------------------------------------------------------------

def _small_point(args):
    eps, resolution, optimize, K = args
    curve = witness_curve(eps, resolution[0])
    harm = solve_harmonic(curve, resolution)
    lin = linear_extension_field(curve, resolution)
    D_h, D_l = dirichlet_energy(harm), dirichlet_energy(lin)
    unit = cosine_bump(resolution[0], amplitude=1.0)
    Ee = en.E_eps(unit, eps, resolution)
    physical = eps ** (2.0 / 3.0) * Ee.total
    out = {
        "eps": eps,
        "dirichlet_linear": D_l,
        "dirichlet_harmonic": D_h,
        "E_eps": Ee.to_dict(),
        "physical_total": physical,
        # EnergyReport-shaped summary used for the CSV table
        "dirichlet": D_l,
        "perimeter_term": perimeter(curve),
        "total": physical,
    }
    if optimize:
        from .optimize import ShapeParams, minimize

        res = minimize(ShapeParams((PROFILE_COEFFICIENT,)), functional="E_eps", eps=eps, K=K,
                       grid=(257, 65), tol=1e-5, max_iter=100)
        x = np.linspace(-1.0, 1.0, 4001)
        f = res.params.spectral().f(x)
        g = profile_g().spectral.f(x)
        out["optimized"] = {
            "coefficients": list(res.params.coefficients),
            "E_eps": res.energy_trace[-1],
            "converged": res.converged,
            "l2_distance_to_g": float(math.sqrt(np.trapezoid((f - g) ** 2, x))),
            "physical_half_width": eps ** (2.0 / 3.0),
        }
    return out


def small_volume_sweep(eps_list: Sequence[float], optimize: bool = False,
                       resolution=(513, 129), K: int = 8, workers: int = 1) -> SweepResult:
    """Thin-droplet scaling on the witness curve ``eps (1 + cos pi x) / 2``.

    Per ``eps``: the linear-extension and harmonic Dirichlet energies of the
    witness curve (an upper bound and the true value), and the physical energy
    at volume ``eps^2`` of the best-scaled unit-area cosine profile,
    ``eps^(2/3) E_eps((1 + cos pi x)/2)``.  Fits: Dirichlet vs ``eps``
    (target 1) and physical energy vs ``eps`` (target 2/3).  ``window`` is the
    max/min ratio of ``D/eps`` across the sweep.
    """
    eps_list = [float(e) for e in eps_list]
    if any(not 0 < e <= 0.2 for e in eps_list):
        raise DomainError("small-volume sweep needs eps in (0, 0.2]")
    pts = _map(_small_point, [(e, tuple(resolution), optimize, K) for e in eps_list], workers)
    ratio_l = [p["dirichlet_linear"] / p["eps"] for p in pts]
    ratio_h = [p["dirichlet_harmonic"] / p["eps"] for p in pts]
    fits = {}
    if len(eps_list) >= 4:
        fits["dirichlet_vs_eps"] = fit_exponent(eps_list, [p["dirichlet_linear"] for p in pts])
        fits["harmonic_dirichlet_vs_eps"] = fit_exponent(eps_list,
                                                         [p["dirichlet_harmonic"] for p in pts])
        fits["total_vs_eps"] = fit_exponent(eps_list, [p["physical_total"] for p in pts])
    extras = {
        "dirichlet_over_eps": ratio_l,
        "harmonic_dirichlet_over_eps": ratio_h,
        "window": max(ratio_l) / min(ratio_l),
        "harmonic_window": max(ratio_h) / min(ratio_h),
    }
    return SweepResult("small_volume", "eps", eps_list, pts, None, [], fits, extras)


# -- the limit ODE ----------------------------------------------------------------------

def ode_check(h: Optional[Callable] = None, d2h: Optional[Callable] = None,
              n: int = 2001) -> dict:
    """Residual of ``h'' = -h / (4 (int h^2)^(3/2))`` on ``n`` points of ``[-1, 1]``.

    Defaults to the closed form ``h = pi^(-2/3) cos(pi x / 2)`` with its exact
    second derivative; ``int h^2`` is computed by Gauss-Legendre quadrature.
    """
    if h is None:
        h = lambda x: PROFILE_COEFFICIENT * np.cos(0.5 * math.pi * np.asarray(x))
        d2h = lambda x: -0.25 * math.pi ** 2 * PROFILE_COEFFICIENT * np.cos(0.5 * math.pi * np.asarray(x))
    elif d2h is None:
        raise DomainError("a custom h needs its second derivative")
    xs, ws = _gauss_panels(-1.0, 1.0, 64)
    mass = float(ws @ h(xs) ** 2)
    x = np.linspace(-1.0, 1.0, n)
    residual = d2h(x) + h(x) / (4.0 * mass ** 1.5)
    return {"residual": float(np.max(np.abs(residual))), "integral_h_sq": mass,
            "boundary": [float(h(np.array(-1.0))), float(h(np.array(1.0)))], "samples": n}


# -- Gamma-convergence table ---------------------------------------------------------------

def recovery_x_term(curve: GraphCurve, eps: float, panels: int = 256) -> float:
    """``eps^(-2/3) int |d_x Theta|^2`` for the linear-in-height extension on ``T_eps f``.

    With ``a(x) = arctan(eps^(2/3) f')`` and ``Theta = a(x) y / (eps^(2/3) f)``
    the height integral is exact, leaving
    ``(1/3) int f (a' - a f'/f)^2 dx``.
    """
    s = eps ** (2.0 / 3.0)
    xs, ws = _gauss_panels(float(curve.x[0]), float(curve.x[-1]), panels)
    if curve.spectral is not None:
        f, df, d2f = curve.spectral.f(xs), curve.spectral.df(xs), curve.spectral.d2f(xs)
    else:
        f = curve.evaluate(xs)
        df = curve.evaluate_slope(xs)
        d2f = np.gradient(df, xs)
    a = np.arctan(s * df)
    da = s * d2f / (1.0 + (s * df) ** 2)
    integrand = f * (da - a * df / f) ** 2 / 3.0
    # eps^(-2/3) * (s f) / 3 * (...)^2 with the s from the height cancels
    return float(ws @ integrand)


def gamma_convergence_table(curve: GraphCurve, eps_list: Sequence[float],
                            resolution=(513, 129), workers: int = 1) -> SweepResult:
    """``E_eps(f)`` along a decreasing ``eps`` sequence with the gap to ``E0(f)``.

    The ``eps = 0`` row is ``E0(f)`` itself.  Also tabulated: the linear
    (recovery-sequence) extension's ``E_eps`` and its ``x``-derivative part,
    whose decay exponent in ``eps`` is fitted.
    """
    eps_list = [float(e) for e in eps_list]
    if any(not 0 < e <= 1 for e in eps_list):
        raise DomainError("eps must lie in (0, 1]")
    e0 = en.E0(curve).total
    harm = _map(_gamma_point, [(curve, e, tuple(resolution), "harmonic") for e in eps_list], workers)
    lin = _map(_gamma_point, [(curve, e, tuple(resolution), "linear") for e in eps_list], workers)
    xterm = [recovery_x_term(curve, e) for e in eps_list]
    gaps = [r["total"] - e0 for r in harm]
    fits = {}
    if len(eps_list) >= 4:
        fits["x_term_vs_eps"] = fit_exponent(eps_list, xterm)
        if all(g > 0 for g in gaps):
            fits["gap_vs_eps"] = fit_exponent(eps_list, gaps)
    rows = [{"eps": 0.0, "E_eps": e0, "gap": 0.0}]
    rows += [{"eps": e, "E_eps": h["total"], "gap": g, "E_eps_linear": l["total"],
              "linear_gap": l["total"] - e0, "x_term": x}
             for e, h, l, g, x in zip(eps_list, harm, lin, gaps, xterm)]
    return SweepResult("gamma_convergence", "eps", eps_list, harm, e0, gaps, fits,
                       {"table": rows, "E0": e0})


def _gamma_point(args):
    curve, eps, resolution, extension = args
    return en.E_eps(curve, eps, resolution, extension=extension).to_dict()
