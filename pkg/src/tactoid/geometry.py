"""Droplet boundary curves: graph form, arc-length form, and measure quantities.

The upper boundary of a droplet is stored as a positive graph ``f`` on
``[-a, a]`` that vanishes at both ends.  Optionally the curve carries a
spectral form ``f = h**2`` with ``h(x) = sum_k c_k cos((k + 1/2) pi x / a)``;
every basis function vanishes at ``x = +-a`` so positivity and endpoint
pinning hold for any coefficient vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DomainError, MalformedCurveError, VerticalTangentError

DEFAULT_SAMPLES = 1025


def make_grid(a: float, n: int, kind: str = "uniform") -> np.ndarray:
    """Sample stations on ``[-a, a]``; ``kind="cosine"`` clusters them at the ends."""
    if n < 3:
        raise DomainError(f"need at least 3 samples, got {n}")
    if kind == "uniform":
        x = np.linspace(-a, a, n)
    elif kind == "cosine":
        x = -a * np.cos(np.linspace(0.0, math.pi, n))
    else:
        raise DomainError(f"unknown grid kind {kind!r}")
    # exact mirror symmetry so even curves give exactly odd traces
    x = 0.5 * (x - x[::-1])
    x[0], x[-1] = -a, a
    return x


@dataclass(frozen=True)
class SpectralForm:
    a: float
    coefficients: tuple[float, ...]

    @property
    def K(self) -> int:
        return len(self.coefficients)

    def _waves(self, x):
        k = np.arange(self.K) + 0.5
        w = k * math.pi / self.a
        return w, np.multiply.outer(np.asarray(x, dtype=float), w)

    def h(self, x):
        _, arg = self._waves(x)
        return np.cos(arg) @ np.asarray(self.coefficients)

    def dh(self, x):
        w, arg = self._waves(x)
        return -(np.sin(arg) * w) @ np.asarray(self.coefficients)

    def d2h(self, x):
        w, arg = self._waves(x)
        return -(np.cos(arg) * w**2) @ np.asarray(self.coefficients)

    def f(self, x):
        return self.h(x) ** 2

    def df(self, x):
        return 2.0 * self.h(x) * self.dh(x)

    def d2f(self, x):
        return 2.0 * (self.dh(x) ** 2 + self.h(x) * self.d2h(x))

    def area(self) -> float:
        # the basis is orthogonal on [-a, a] with norm a
        return self.a * float(np.sum(np.square(self.coefficients)))

    def scaled(self, s: float) -> "SpectralForm":
        r = math.sqrt(s)
        return SpectralForm(self.a * s, tuple(r * c for c in self.coefficients))


@dataclass(frozen=True, eq=False)
class GraphCurve:
    """Positive graph ``y = f(x)`` on ``[x[0], x[-1]]`` with ``f = 0`` at both ends.

    ``df`` holds exact slopes at the samples when they are known; ``fn`` and
    ``dfn`` evaluate the curve off the grid (used for resampling).
    """

    x: np.ndarray
    f: np.ndarray
    df: Optional[np.ndarray] = None
    spectral: Optional[SpectralForm] = None
    fn: Optional[Callable] = field(default=None, repr=False)
    dfn: Optional[Callable] = field(default=None, repr=False)
    name: str = ""
    grid: str = "uniform"

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        f = np.asarray(self.f, dtype=float)
        if x.ndim != 1 or x.shape != f.shape:
            raise MalformedCurveError("x and f must be 1-D arrays of equal length")
        if x.size < 3:
            raise MalformedCurveError(f"a curve needs at least 3 samples, got {x.size}")
        if not np.all(np.diff(x) > 0):
            raise MalformedCurveError("x samples must be strictly increasing")
        if not np.all(np.isfinite(f)):
            raise MalformedCurveError("non-finite curve height")
        if f[0] != 0.0 or f[-1] != 0.0:
            raise MalformedCurveError("curve must meet the axis at both ends (f = 0)")
        if not np.all(f[1:-1] > 0):
            raise MalformedCurveError("curve touches or crosses the axis in the interior")
        x.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "f", f)
        if self.df is not None:
            df = np.asarray(self.df, dtype=float)
            if df.shape != x.shape:
                raise MalformedCurveError("df must match x")
            df.setflags(write=False)
            object.__setattr__(self, "df", df)

    # -- construction -------------------------------------------------------

    @classmethod
    def from_function(cls, fn, dfn=None, a: float = 1.0, n: int = DEFAULT_SAMPLES,
                      grid: str = "uniform", name: str = "") -> "GraphCurve":
        x = make_grid(a, n, grid)
        f = np.asarray(fn(x), dtype=float)
        f[0] = f[-1] = 0.0
        df = None if dfn is None else np.asarray(dfn(x), dtype=float)
        return cls(x, f, df=df, fn=fn, dfn=dfn, name=name, grid=grid)

    @classmethod
    def from_spectral(cls, coefficients: Sequence[float], a: float = 1.0,
                      n: int = DEFAULT_SAMPLES, grid: str = "uniform",
                      name: str = "") -> "GraphCurve":
        sp = SpectralForm(float(a), tuple(float(c) for c in coefficients))
        x = make_grid(a, n, grid)
        f = sp.f(x)
        f[0] = f[-1] = 0.0
        return cls(x, f, df=sp.df(x), spectral=sp, name=name, grid=grid)

    @classmethod
    def from_samples(cls, x, f, name: str = "") -> "GraphCurve":
        return cls(np.asarray(x, dtype=float), np.asarray(f, dtype=float), name=name)

    # -- basic queries ------------------------------------------------------

    @property
    def a(self) -> float:
        return 0.5 * float(self.x[-1] - self.x[0])

    @property
    def n(self) -> int:
        return self.x.size

    def slope(self) -> np.ndarray:
        """``f'`` at the samples: exact when known, else second-order differences."""
        if self.spectral is not None:
            return self.spectral.df(self.x)
        if self.df is not None:
            return np.array(self.df)
        # one-sided second-order stencils at the ends
        return np.gradient(self.f, self.x, edge_order=2)

    def _spline(self):
        return CubicSpline(self.x, self.f)

    def evaluate(self, xq) -> np.ndarray:
        xq = np.asarray(xq, dtype=float)
        if self.spectral is not None:
            return self.spectral.f(xq)
        if self.fn is not None:
            return np.asarray(self.fn(xq), dtype=float)
        return self._spline()(xq)

    def evaluate_slope(self, xq) -> np.ndarray:
        xq = np.asarray(xq, dtype=float)
        if self.spectral is not None:
            return self.spectral.df(xq)
        if self.dfn is not None:
            return np.asarray(self.dfn(xq), dtype=float)
        return self._spline()(xq, 1)

    def resampled(self, n: int, grid: Optional[str] = None) -> "GraphCurve":
        grid = grid or self.grid
        if grid == "arclength":
            x = arclength_grid(self, n)
        else:
            x = make_grid(self.a, n, grid) + 0.5 * (self.x[0] + self.x[-1])
        f = self.evaluate(x)
        f[0] = f[-1] = 0.0
        df = None
        if self.spectral is not None or self.dfn is not None or self.df is not None:
            df = self.evaluate_slope(x)
        return GraphCurve(x, f, df=df, spectral=self.spectral, fn=self.fn,
                          dfn=self.dfn, name=self.name, grid=grid)

    def scaled(self, s: float) -> "GraphCurve":
        """Isotropic dilation about the origin by factor ``s``."""
        fn = dfn = None
        if self.fn is not None:
            base = self.fn
            fn = lambda x, base=base: s * np.asarray(base(np.asarray(x) / s))
        if self.dfn is not None:
            dbase = self.dfn
            dfn = lambda x, dbase=dbase: np.asarray(dbase(np.asarray(x) / s))
        sp = None if self.spectral is None else self.spectral.scaled(s)
        return GraphCurve(s * self.x, s * self.f, df=self.df, spectral=sp, fn=fn,
                          dfn=dfn, name=self.name, grid=self.grid)

    def with_height(self, factor: float) -> "GraphCurve":
        """Vertical compression ``(x, f) -> (x, factor * f)``."""
        fn = dfn = None
        if self.fn is not None:
            base = self.fn
            fn = lambda x, base=base: factor * np.asarray(base(x))
        if self.dfn is not None:
            dbase = self.dfn
            dfn = lambda x, dbase=dbase: factor * np.asarray(dbase(x))
        sp = None
        if self.spectral is not None:
            r = math.sqrt(factor)
            sp = SpectralForm(self.spectral.a, tuple(r * c for c in self.spectral.coefficients))
        df = None if self.df is None else factor * self.df
        return GraphCurve(self.x, factor * self.f, df=df, spectral=sp, fn=fn, dfn=dfn,
                          name=self.name, grid=self.grid)


def arclength_grid(curve: GraphCurve, n: int, weight: float = 0.5,
                   fine: int = 200001) -> np.ndarray:
    """Stations equidistributing a blend of arc length and the cosine parameter.

    Steep stretches of the graph (where a cosine or uniform grid leaves a
    near-vertical piece with a handful of columns) get nodes in proportion to
    their length, while the cosine part keeps the ends clustered.  Symmetric
    curves get exactly mirror-symmetric stations.
    """
    if n < 3:
        raise DomainError(f"need at least 3 samples, got {n}")
    a = curve.a
    c = 0.5 * float(curve.x[0] + curve.x[-1])
    u = np.linspace(0.0, 1.0, fine)
    xf = c - a * np.cos(math.pi * u)
    xf[0], xf[-1] = c - a, c + a
    yf = curve.evaluate(xf)
    yf[0] = yf[-1] = 0.0
    arc = np.concatenate([[0.0], np.cumsum(np.hypot(np.diff(xf), np.diff(yf)))])
    blend = weight * arc / arc[-1] + (1.0 - weight) * u
    x = np.interp(np.linspace(0.0, 1.0, n), blend, xf)
    if np.allclose(yf, yf[::-1], rtol=0.0, atol=1e-10 * max(float(yf.max()), 1e-300)):
        x = c + 0.5 * ((x - c) - (x[::-1] - c))
    x[0], x[-1] = c - a, c + a
    return x


@dataclass(frozen=True, eq=False)
class ParametricCurve:
    """Polyline sampled at arc-length stations ``t`` (``t[0] = 0``)."""

    points: np.ndarray
    t: np.ndarray
    total_length: float
    strict: bool = True

    def __post_init__(self):
        z = np.asarray(self.points, dtype=float)
        t = np.asarray(self.t, dtype=float)
        if z.ndim != 2 or z.shape[1] != 2 or z.shape[0] != t.size:
            raise MalformedCurveError("points must be (n, 2) and match t")
        if z.shape[0] < 2:
            raise MalformedCurveError("need at least 2 points")
        if not np.all(np.diff(t) > 0):
            raise MalformedCurveError("arc-length stations must increase")
        z.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "points", z)
        object.__setattr__(self, "t", t)
        if self.strict:
            _check_admissible(z, t)

    @classmethod
    def from_points(cls, points, strict: bool = False) -> "ParametricCurve":
        """Polyline with ``t`` taken as cumulative chord length."""
        z = np.asarray(points, dtype=float)
        t = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(z, axis=0).T))])
        return cls(z, t, float(t[-1]), strict=strict)

    @property
    def n(self) -> int:
        return self.points.shape[0]


def _check_admissible(z: np.ndarray, t: np.ndarray) -> None:
    scale = max(float(np.ptp(z[:, 0])), float(np.ptp(z[:, 1])), 1e-300)
    dt = np.diff(t)
    if np.max(np.abs(dt - dt.mean())) > 1e-6 * dt.mean():
        raise MalformedCurveError("stations are not equally spaced in arc length")
    chords = np.hypot(*np.diff(z, axis=0).T)
    if np.any(chords > dt * (1 + 1e-6)):
        raise MalformedCurveError("chord longer than its arc: not a unit-speed sampling")
    if np.any(np.diff(z[:, 0]) < -1e-12 * scale):
        raise MalformedCurveError("x must be non-decreasing along the curve")
    if np.any(z[:, 1] < -1e-12 * scale):
        raise MalformedCurveError("curve dips below the axis")
    if abs(z[0, 1]) > 1e-12 * scale or abs(z[-1, 1]) > 1e-12 * scale:
        raise MalformedCurveError("endpoints must lie on the axis")
    if has_self_intersection(z):
        raise MalformedCurveError("polyline self-intersects")


def _segments_touch(p, q, r, s, tol):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    def seg_dist(a, b, c):
        ab = b - a
        L = float(ab @ ab)
        u = 0.0 if L == 0 else min(1.0, max(0.0, float((c - a) @ ab) / L))
        return float(np.hypot(*(a + u * ab - c)))

    o1, o2, o3, o4 = orient(p, q, r), orient(p, q, s), orient(r, s, p), orient(r, s, q)
    if o1 * o2 < 0 and o3 * o4 < 0:
        return True
    return min(seg_dist(p, q, r), seg_dist(p, q, s), seg_dist(r, s, p), seg_dist(r, s, q)) <= tol


def has_self_intersection(z: np.ndarray, tol: float = 1e-12) -> bool:
    """Sweep over x-sorted segments; only x-overlapping, non-adjacent pairs are tested."""
    z = np.asarray(z, dtype=float)
    nseg = z.shape[0] - 1
    if nseg < 3:
        return False
    lo = np.minimum(z[:-1, 0], z[1:, 0])
    hi = np.maximum(z[:-1, 0], z[1:, 0])
    order = np.argsort(lo, kind="stable")
    lo_sorted = lo[order]
    for rank, i in enumerate(order):
        stop = np.searchsorted(lo_sorted, hi[i] + tol, side="right")
        for j in order[rank + 1:stop]:
            if abs(int(j) - int(i)) < 2:
                continue
            if _segments_touch(z[i], z[i + 1], z[j], z[j + 1], tol):
                return True
    return False


# -- measure quantities ------------------------------------------------------

def _richardson(fine: float, coarse: float) -> float:
    return (4.0 * fine - coarse) / 3.0


def _trapezoid(x, y) -> float:
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def volume(curve: GraphCurve) -> float:
    """Area between the graph and the axis."""
    if not isinstance(curve, GraphCurve):
        raise MalformedCurveError("volume needs a GraphCurve")
    if not np.all(np.diff(curve.x) > 0):
        raise MalformedCurveError("x samples must be strictly increasing")
    if curve.spectral is not None:
        return curve.spectral.area()
    fine = _trapezoid(curve.x, curve.f)
    if curve.n % 2 == 1 and curve.n >= 5:
        return _richardson(fine, _trapezoid(curve.x[::2], curve.f[::2]))
    return fine


def _chord_sum(z: np.ndarray) -> float:
    d = np.diff(z, axis=0)
    return float(np.sum(np.hypot(d[:, 0], d[:, 1])))


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _gauss_panels(lo: float, hi: float, panels: int):
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    xs = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    ws = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    return xs, ws


def perimeter(curve) -> float:
    """Length ``l(Gamma)`` of the curved part of the boundary."""
    if isinstance(curve, ParametricCurve):
        if curve.n < 3:
            raise MalformedCurveError("need at least 3 samples")
        return _chord_sum(curve.points)
    if curve.n < 3:
        raise MalformedCurveError("need at least 3 samples")
    if curve.spectral is not None:
        xs, ws = _gauss_panels(float(curve.x[0]), float(curve.x[-1]), 128)
        return float(ws @ np.sqrt(1.0 + curve.spectral.df(xs) ** 2))
    z = np.column_stack([curve.x, curve.f])
    fine = _chord_sum(z)
    if curve.n % 2 == 1 and curve.n >= 5:
        return _richardson(fine, _chord_sum(z[::2]))
    return fine


def rescale_to_volume(curve, v_target: float):
    """Isotropic dilation taking the droplet area to ``v_target``."""
    if not v_target > 0:
        raise DomainError(f"target volume must be positive, got {v_target}")
    if isinstance(curve, ParametricCurve):
        z = curve.points
        area = abs(_trapezoid(z[:, 0], z[:, 1]))
        s = math.sqrt(v_target / area)
        return ParametricCurve(z * s, curve.t * s, curve.total_length * s, strict=curve.strict)
    v = volume(curve)
    if not v > 0:
        raise DomainError("curve has no area")
    if v == v_target:
        return curve
    return curve.scaled(math.sqrt(v_target / v))


def to_parametric(curve: GraphCurve, n_points: int, oversample: int = 64,
                  strict: bool = True) -> ParametricCurve:
    """Resample a graph at ``n_points`` stations equally spaced in arc length."""
    if n_points < 3:
        raise DomainError(f"n_points must be >= 3, got {n_points}")
    m = max(oversample * curve.n, 32768)
    m += m % 2  # even number of intervals for the Richardson pass
    xf = make_grid(curve.a, m + 1, "cosine") + 0.5 * (curve.x[0] + curve.x[-1])
    yf = curve.evaluate(xf)
    yf[0] = yf[-1] = 0.0
    seg = np.hypot(np.diff(xf), np.diff(yf))
    s_fine = np.concatenate([[0.0], np.cumsum(seg)])
    # Richardson on the even nodes: chord sums are O(h^2) accurate
    s_even = s_fine[::2]
    coarse = np.concatenate([[0.0], np.cumsum(np.hypot(np.diff(xf[::2]), np.diff(yf[::2])))])
    s_rich = _richardson(s_even, coarse)
    length = float(s_rich[-1])
    stations = np.linspace(0.0, length, n_points)
    # points sit on the fine chord polyline at equal chord-length spacing, so
    # every chord is at most its station gap (chord sums never exceed the
    # extrapolated length); the polyline is within O(h^2) of the curve
    along = np.linspace(0.0, float(s_fine[-1]), n_points)
    xs = np.interp(along, s_fine, xf)
    ys = np.interp(along, s_fine, yf)
    xs[0], xs[-1] = xf[0], xf[-1]
    ys[0] = ys[-1] = 0.0
    ys = np.maximum(ys, 0.0)
    return ParametricCurve(np.column_stack([xs, ys]), stations, length, strict=strict)


@dataclass(frozen=True)
class BoundaryTrace:
    x: np.ndarray
    curve: np.ndarray
    base: np.ndarray


def boundary_angle(curve: GraphCurve, convention: str = "arctan") -> BoundaryTrace:
    """Anchoring angle on the boundary: 0 on the base, ``arctan f'`` on the curve.

    ``convention="arcsin"`` gives ``arcsin f'`` instead, the trace used by the
    explicit extension of the ``(cos x + 1)/(2 pi)`` configuration.
    """
    s = curve.slope()
    if not np.all(np.isfinite(s[1:-1])):
        raise VerticalTangentError("infinite slope at an interior sample; not a graph")
    if convention == "arctan":
        theta = np.arctan(s)
    elif convention == "arcsin":
        if np.any(np.abs(s) > 1):
            raise DomainError("arcsin convention needs |f'| <= 1")
        theta = np.arcsin(s)
    else:
        raise DomainError(f"unknown convention {convention!r}")
    return BoundaryTrace(curve.x, theta, np.zeros_like(curve.x))


def hausdorff_distance(c1, c2, n: int = 4001) -> float:
    """Symmetric Hausdorff distance between two curves (densely resampled)."""

    def dense(c):
        if isinstance(c, ParametricCurve):
            return c.points
        return to_parametric(c, n, oversample=4, strict=False).points

    from scipy.spatial import cKDTree

    p, q = dense(c1), dense(c2)
    d1 = cKDTree(q).query(p)[0].max()
    d2 = cKDTree(p).query(q)[0].max()
    return float(max(d1, d2))


# -- named curves ------------------------------------------------------------

def gamma0(n: int = DEFAULT_SAMPLES) -> GraphCurve:
    """``f0(x) = (cos x + 1) / (2 pi)`` on ``[-pi, pi]``; unit area."""
    fn = lambda x: (np.cos(x) + 1.0) / (2.0 * math.pi)
    dfn = lambda x: -np.sin(x) / (2.0 * math.pi)
    return GraphCurve.from_function(fn, dfn, a=math.pi, n=n, name="gamma0")


def semicircle(n: int = DEFAULT_SAMPLES, radius: float = 1.0) -> GraphCurve:
    def fn(x):
        return np.sqrt(np.clip(radius**2 - np.asarray(x) ** 2, 0.0, None))

    def dfn(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -x / np.sqrt(np.clip(radius**2 - x**2, 0.0, None))
        return out

    return GraphCurve.from_function(fn, dfn, a=radius, n=n, grid="cosine", name="semicircle")


def cosine_bump(n: int = DEFAULT_SAMPLES, amplitude: float = 1.0) -> GraphCurve:
    """``amplitude * (1 + cos pi x) / 2`` on ``[-1, 1]``, i.e. ``h = sqrt(amplitude) cos(pi x / 2)``."""
    return GraphCurve.from_spectral([math.sqrt(amplitude)], a=1.0, n=n, name="cosine")
