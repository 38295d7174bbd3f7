"""Geometric constants of a sampled curve.

Every quantity here is an empirical supremum, table or truncated integral
computed from a polyline, so qualitative regularity statements (chord-arc,
vanishing chord-arc, VMO normal, finite Weil-Petersson energy) become
numbers whose trend under refinement can be inspected.  Nothing here returns
a yes/no verdict about membership in a function class.

Curves are accepted as :class:`ParametricCurve`, as :class:`GraphCurve`
(resampled in arc length) or as an ``(n, 2)`` array of points, whose arc
stations are the cumulative chord lengths.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, MalformedCurveError
from .geometry import GraphCurve, ParametricCurve, to_parametric

EXHAUSTIVE_TRIPLES = 512
ROW_BLOCK = 256
GOLDEN_TOL = 1e-10
ANGLE_SCAN = 90


def as_parametric(curve, n_points: int = 1025) -> ParametricCurve:
    if isinstance(curve, ParametricCurve):
        return curve
    if isinstance(curve, GraphCurve):
        return to_parametric(curve, n_points)
    z = np.asarray(curve, dtype=float)
    if z.ndim != 2 or z.shape[1] != 2:
        raise MalformedCurveError("expected an (n, 2) array of points")
    return ParametricCurve.from_points(z)


def _points(curve):
    pc = as_parametric(curve)
    return pc.points, pc.t


def default_radii(curve, count: int = 8) -> np.ndarray:
    """Dyadic radii from half the diameter down, staying above the sample spacing."""
    z, t = _points(curve)
    diam = _diameter(z)
    h = float(np.max(np.diff(t)))
    radii = diam / 2.0 ** np.arange(1, count + 1)
    return radii[radii > 2 * h]


def _diameter(z) -> float:
    from scipy.spatial import ConvexHull
    from scipy.spatial.distance import pdist

    try:
        hull = z[ConvexHull(z).vertices]
    except Exception:  # collinear or tiny point sets
        hull = z
    return float(pdist(hull).max()) if len(hull) > 1 else 0.0


def _pair_blocks(z, t, block: int = ROW_BLOCK):
    """Yield ``(i, j, chord, arc)`` for all pairs ``i < j`` in row blocks."""
    n = z.shape[0]
    for lo in range(0, n - 1, block):
        hi = min(lo + block, n - 1)
        rows = np.arange(lo, hi)
        d = z[lo:hi, None, :] - z[None, :, :]
        chord = np.hypot(d[..., 0], d[..., 1])
        arc = np.abs(t[lo:hi, None] - t[None, :])
        upper = np.arange(n)[None, :] > rows[:, None]
        yield upper, chord, arc


# -- two-point and chord-arc constants ----------------------------------------

def _triple_indices(n: int) -> np.ndarray:
    if n <= EXHAUSTIVE_TRIPLES:
        return np.arange(n)
    # stratified: evenly spaced strata, endpoints always kept
    return np.unique(np.round(np.linspace(0, n - 1, EXHAUSTIVE_TRIPLES)).astype(int))


def two_point_constant(curve) -> float:
    """``sup max(|z1 z2|, |z2 z3|) / |z1 z3|`` over ordered sample triples.

    Exhaustive up to 512 samples; above that a fixed stratified subset of 512
    samples (including both endpoints) is scanned.
    """
    z, _ = _points(curve)
    if z.shape[0] < 3:
        raise MalformedCurveError("two-point constant needs at least 3 samples")
    idx = _triple_indices(z.shape[0])
    p = z[idx]
    m = p.shape[0]
    D = np.hypot(*(p[:, None, :] - p[None, :, :]).transpose(2, 0, 1))
    best = 1.0
    j = np.arange(m)
    for i1 in range(m - 2):
        # rows: middle index i2, columns: last index i3
        lo = i1 + 1
        d12 = D[i1, lo:][:, None]
        d23 = D[lo:, lo:]
        d13 = D[i1, lo:][None, :]
        valid = j[lo:][None, :] > j[lo:][:, None]
        if np.any(valid & (d13 == 0)):
            raise MalformedCurveError("coincident samples")
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(valid, np.maximum(d12, d23) / d13, 0.0)
        best = max(best, float(ratio.max(initial=0.0)))
    return best


def chord_arc_constant(curve) -> float:
    """``sup arc(z1, z2) / |z1 - z2|`` over sample pairs."""
    z, t = _points(curve)
    best = 1.0
    for upper, chord, arc in _pair_blocks(z, t):
        if np.any(upper & (chord == 0)):
            raise MalformedCurveError("coincident sampled points")
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(upper, arc / chord, 0.0)
        best = max(best, float(ratio.max()))
    return best


def vanishing_modulus(curve, r_list: Optional[Sequence[float]] = None) -> dict:
    """For each ``r``: ``sup (arc/chord) - 1`` over pairs with chord ``<= r``."""
    z, t = _points(curve)
    radii = np.asarray(default_radii(curve) if r_list is None else r_list, dtype=float)
    if np.any(radii <= 0):
        raise DomainError("radii must be positive")
    out = np.zeros(radii.size)
    for upper, chord, arc in _pair_blocks(z, t):
        if np.any(upper & (chord == 0)):
            raise MalformedCurveError("coincident sampled points")
        with np.errstate(divide="ignore", invalid="ignore"):
            excess = np.where(upper, arc / chord - 1.0, 0.0)
        for k, r in enumerate(radii):
            sel = upper & (chord <= r)
            if sel.any():
                out[k] = max(out[k], float(excess[sel].max()))
    return {"r": radii.tolist(), "value": out.tolist()}


# -- contact angle ----------------------------------------------------------

def cusp_angle(curve, r_list: Optional[Sequence[float]] = None) -> dict:
    """Height-to-distance ratios near both axis endpoints.

    For each ``r`` the table holds the maximum of ``y / (x - x_left)`` over
    samples within distance ``r`` of the left endpoint, and likewise
    ``y / (x_right - x)`` on the right.  A value tending to zero as ``r``
    shrinks means the curve leaves the axis tangentially (a cusp).  Entries
    with no sample in range are NaN.
    """
    z, _ = _points(curve)
    radii = np.asarray(default_radii(curve) if r_list is None else r_list, dtype=float)
    scale = max(float(np.ptp(z[:, 0])), 1e-300)
    if abs(z[0, 1]) > 1e-9 * scale or abs(z[-1, 1]) > 1e-9 * scale:
        raise DomainError("cusp angle needs both endpoints on the axis")
    left, right = z[0], z[-1]
    dl = np.hypot(*(z[1:] - left).T)
    dr = np.hypot(*(z[:-1] - right).T)
    with np.errstate(divide="ignore", invalid="ignore"):
        ql = z[1:, 1] / (z[1:, 0] - left[0])
        qr = z[:-1, 1] / (right[0] - z[:-1, 0])
    ql = np.where(np.isnan(ql), 0.0, ql)
    qr = np.where(np.isnan(qr), 0.0, qr)
    lt, rt = [], []
    for r in radii:
        sl, sr = dl <= r, dr <= r
        lt.append(float(ql[sl].max()) if sl.any() else float("nan"))
        rt.append(float(qr[sr].max()) if sr.any() else float("nan"))
    return {"r": radii.tolist(), "left": lt, "right": rt}


# -- mean oscillation of the normal ------------------------------------------

def segment_normals(z: np.ndarray):
    """Unit normal (tangent rotated by +90 degrees), midpoint and length per segment."""
    d = np.diff(z, axis=0)
    length = np.hypot(d[:, 0], d[:, 1])
    if np.any(length == 0):
        raise MalformedCurveError("repeated points: normal undefined")
    tangent = d / length[:, None]
    normal = np.column_stack([-tangent[:, 1], tangent[:, 0]])
    mid = 0.5 * (z[1:] + z[:-1])
    return normal, mid, length


def vmo_oscillation(curve, r_list: Optional[Sequence[float]] = None) -> dict:
    """For each ``r``: sup over centers of the mean oscillation of the normal.

    The window around a center ``x`` is the set of segments whose midpoints
    lie in the Euclidean ball ``B(x, r)``; the oscillation is the
    length-weighted mean of ``|nu - nu_B|`` where ``nu_B`` is the
    length-weighted mean normal.  Centers are the sample points.
    """
    z, _ = _points(curve)
    radii = np.asarray(default_radii(curve) if r_list is None else r_list, dtype=float)
    normal, mid, length = segment_normals(z)
    out = np.zeros(radii.size)
    for lo in range(0, z.shape[0], ROW_BLOCK):
        c = z[lo:lo + ROW_BLOCK]
        dist = np.hypot(*(c[:, None, :] - mid[None, :, :]).transpose(2, 0, 1))
        for k, r in enumerate(radii):
            w = np.where(dist <= r, length[None, :], 0.0)
            mass = w.sum(axis=1)
            ok = mass > 0
            if not ok.any():
                continue
            w, mass = w[ok], mass[ok]
            mean = (w @ normal) / mass[:, None]
            dev = np.hypot(normal[None, :, 0] - mean[:, None, 0],
                           normal[None, :, 1] - mean[:, None, 1])
            osc = (w * dev).sum(axis=1) / mass
            out[k] = max(out[k], float(osc.max()))
    return {"r": radii.tolist(), "value": out.tolist()}


# -- Weil-Petersson type quantities -------------------------------------------

def _trapezoid_weights(t: np.ndarray) -> np.ndarray:
    w = np.zeros_like(t)
    dt = np.diff(t)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def h32_seminorm(curve, band: float = 2.0) -> float:
    """Trapezoid double sum of ``|z'(t) - z'(s)|^2 / (t - s)^2``.

    Pairs with ``|t - s| < band * dt`` are excluded (the integrand is bounded
    there for smooth curves, but the discrete tangent difference is not).
    """
    z, t = _points(curve)
    dz = np.gradient(z, t, axis=0)
    w = _trapezoid_weights(t)
    dt = float(np.mean(np.diff(t)))
    cut = band * dt * (1 - 1e-9)
    total = 0.0
    n = t.size
    for lo in range(0, n, ROW_BLOCK):
        hi = min(lo + ROW_BLOCK, n)
        gap = t[lo:hi, None] - t[None, :]
        keep = np.abs(gap) >= cut
        diff2 = ((dz[lo:hi, None, :] - dz[None, :, :]) ** 2).sum(axis=2)
        with np.errstate(divide="ignore", invalid="ignore"):
            term = np.where(keep, diff2 / gap ** 2, 0.0)
        total += float(w[lo:hi] @ term @ w)
    return total


def mobius_energy(curve) -> float:
    """Trapezoid double sum of ``1/|z - w|^2 - 1/arc(z, w)^2`` off the diagonal."""
    z, t = _points(curve)
    w = _trapezoid_weights(t)
    total = 0.0
    n = t.size
    for lo in range(0, n, ROW_BLOCK):
        hi = min(lo + ROW_BLOCK, n)
        d = z[lo:hi, None, :] - z[None, :, :]
        c2 = (d ** 2).sum(axis=2)
        a2 = (t[lo:hi, None] - t[None, :]) ** 2
        off = np.arange(lo, hi)[:, None] != np.arange(n)[None, :]
        if np.any(off & (c2 == 0)):
            raise MalformedCurveError("coincident sampled points")
        with np.errstate(divide="ignore", invalid="ignore"):
            term = np.where(off, 1.0 / c2 - 1.0 / a2, 0.0)
        total += float(w[lo:hi] @ term @ w)
    return total


def _width(theta, pts, mask):
    """Width of each masked point set across direction ``theta`` (vectorized)."""
    nx, ny = -np.sin(theta), np.cos(theta)
    p = pts[..., 0] * nx[:, None] + pts[..., 1] * ny[:, None]
    hi = np.where(mask, p, -np.inf).max(axis=1)
    lo = np.where(mask, p, np.inf).min(axis=1)
    return hi - lo


def least_max_width(pts: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Minimal strip width over line angle, per row of ``pts`` (rows, m, 2).

    A coarse angle scan brackets the minimum, then golden-section search
    refines it to ``GOLDEN_TOL`` in angle.
    """
    rows = pts.shape[0]
    angles = np.linspace(0.0, math.pi, ANGLE_SCAN, endpoint=False)
    scan = np.stack([_width(np.full(rows, a), pts, mask) for a in angles], axis=1)
    best = scan.argmin(axis=1)
    step = math.pi / ANGLE_SCAN
    lo = angles[best] - step
    hi = angles[best] + step
    g = (math.sqrt(5) - 1) / 2
    x1 = hi - g * (hi - lo)
    x2 = lo + g * (hi - lo)
    f1, f2 = _width(x1, pts, mask), _width(x2, pts, mask)
    while np.max(hi - lo) > GOLDEN_TOL:
        left = f1 < f2
        hi, lo = np.where(left, x2, hi), np.where(left, lo, x1)
        new = np.where(left, hi - g * (hi - lo), lo + g * (hi - lo))
        f_new = _width(new, pts, mask)
        x1, x2, f1, f2 = (np.where(left, new, x2), np.where(left, x1, new),
                          np.where(left, f_new, f2), np.where(left, f1, f_new))
    return np.minimum(np.minimum(f1, f2), scan.min(axis=1))


def beta_numbers(curve, scale: float, centers: Optional[np.ndarray] = None) -> np.ndarray:
    """``beta(x, t) = inf_L sup_{z in B(x,t)} dist(z, L) / t`` at the given centers."""
    z, _ = _points(curve)
    idx = np.arange(z.shape[0]) if centers is None else np.asarray(centers)
    out = np.empty(idx.size)
    for lo in range(0, idx.size, ROW_BLOCK):
        c = z[idx[lo:lo + ROW_BLOCK]]
        dist = np.hypot(*(c[:, None, :] - z[None, :, :]).transpose(2, 0, 1))
        mask = dist <= scale
        cols = np.flatnonzero(mask.any(axis=0))
        pts = np.broadcast_to(z[cols][None], (c.shape[0], cols.size, 2)) - c[:, None, :]
        width = least_max_width(pts, mask[:, cols])
        out[lo:lo + ROW_BLOCK] = 0.5 * width / scale
    return out


def beta_sq_integral(curve, min_factor: float = 4.0) -> dict:
    """Dyadic discretization of ``int int beta^2(x, t) dx dt / t^2``.

    Levels ``t_k = diam / 2^k`` run down to ``min_factor * dt``; each level
    contributes ``ln 2 / t_k * int beta(x, t_k)^2 dx`` (trapezoid in arc
    length over the sample points).
    """
    pc = as_parametric(curve)
    z, t = pc.points, pc.t
    diam = _diameter(z)
    dt = float(np.max(np.diff(t)))
    w = _trapezoid_weights(t)
    levels, contrib = [], []
    k = 0
    while diam > 0:
        tk = diam / 2.0 ** k
        if tk < min_factor * dt:
            break
        beta = beta_numbers(pc, tk)
        levels.append(tk)
        contrib.append(math.log(2.0) / tk * float(w @ beta ** 2))
        k += 1
    return {"t": levels, "level_contribution": contrib, "value": float(sum(contrib)),
            "finest_scale": levels[-1] if levels else None, "sample_spacing": dt}


def polygon_defect(curve, max_level: Optional[int] = None) -> dict:
    """Partial sums of ``sum_n 2^n [l(curve) - l(P_n)]`` over dyadic equal-arc polygons."""
    z, t = _points(curve)
    L = float(t[-1])
    nseg = z.shape[0] - 1
    top = int(math.floor(math.log2(nseg))) if max_level is None else int(max_level)
    terms, partial = [], []
    acc = 0.0
    for level in range(top + 1):
        s = np.linspace(0.0, L, 2 ** level + 1)
        px = np.interp(s, t, z[:, 0])
        py = np.interp(s, t, z[:, 1])
        ln = float(np.hypot(np.diff(px), np.diff(py)).sum())
        term = 2.0 ** level * (L - ln)
        acc += term
        terms.append(term)
        partial.append(acc)
    return {"level": list(range(top + 1)), "term": terms, "partial_sum": partial}


def weil_petersson_suite(curve) -> dict:
    """Truncated H^{3/2}, Moebius, beta^2 and polygon-defect quantities.

    Each comes with truncation metadata; the H^{3/2} sum is also reported at
    half resolution so its refinement trend is visible.
    """
    pc = as_parametric(curve)
    dt = float(np.mean(np.diff(pc.t)))
    h32 = h32_seminorm(pc)
    coarse = None
    if pc.n >= 9:
        sub = ParametricCurve(pc.points[::2], pc.t[::2], pc.total_length, strict=False)
        coarse = h32_seminorm(sub)
    return {
        "h32_seminorm": h32,
        "h32_half_resolution": coarse,
        "h32_band": 2 * dt,
        "mobius_energy": mobius_energy(pc),
        "beta_sq": beta_sq_integral(pc),
        "polygon_defect": polygon_defect(pc),
        "samples": pc.n,
        "sample_spacing": dt,
    }


# -- report --------------------------------------------------------------------

@dataclass
class DiagnosticsReport:
    two_point_constant: float
    chord_arc_constant: float
    vanishing_modulus: dict
    cusp_table: Optional[dict]
    vmo_table: dict
    beta_sq_integral: float
    mobius_energy: float
    h32_seminorm: float
    polygon_defect_partial_sums: list
    truncation: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def tables_csv(self) -> dict:
        """``r,value`` CSV text for each radius table."""
        out = {}
        for name, tab, key in (("vanishing_modulus", self.vanishing_modulus, "value"),
                               ("vmo", self.vmo_table, "value")):
            out[name] = "r,value\n" + "".join(f"{r:.17g},{v:.17g}\n"
                                              for r, v in zip(tab["r"], tab[key]))
        if self.cusp_table is not None:
            for side in ("left", "right"):
                out[f"cusp_{side}"] = "r,value\n" + "".join(
                    f"{r:.17g},{v:.17g}\n" for r, v in zip(self.cusp_table["r"], self.cusp_table[side]))
        return out


def diagnose(curve, r_list: Optional[Sequence[float]] = None, n_points: int = 513) -> DiagnosticsReport:
    """Compute every geometric constant of ``curve``."""
    pc = as_parametric(curve, n_points)
    radii = default_radii(pc) if r_list is None else np.asarray(r_list, dtype=float)
    z = pc.points
    scale = max(float(np.ptp(z[:, 0])), 1e-300)
    on_axis = abs(z[0, 1]) <= 1e-9 * scale and abs(z[-1, 1]) <= 1e-9 * scale
    wp = weil_petersson_suite(pc)
    return DiagnosticsReport(
        two_point_constant=two_point_constant(pc),
        chord_arc_constant=chord_arc_constant(pc),
        vanishing_modulus=vanishing_modulus(pc, radii),
        cusp_table=cusp_angle(pc, radii) if on_axis else None,
        vmo_table=vmo_oscillation(pc, radii),
        beta_sq_integral=wp["beta_sq"]["value"],
        mobius_energy=wp["mobius_energy"],
        h32_seminorm=wp["h32_seminorm"],
        polygon_defect_partial_sums=wp["polygon_defect"]["partial_sum"],
        truncation={
            "samples": pc.n,
            "sample_spacing": wp["sample_spacing"],
            "h32_band": wp["h32_band"],
            "h32_half_resolution": wp["h32_half_resolution"],
            "beta_levels": wp["beta_sq"]["t"],
            "beta_level_contribution": wp["beta_sq"]["level_contribution"],
            "triples_exhaustive": pc.n <= EXHAUSTIVE_TRIPLES,
        },
    )
