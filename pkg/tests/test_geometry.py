import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tactoid.errors import DomainError, MalformedCurveError
from tactoid.geometry import (GraphCurve, ParametricCurve, SpectralForm, arclength_grid,
                              boundary_angle, cosine_bump, gamma0, hausdorff_distance,
                              has_self_intersection, make_grid, perimeter, rescale_to_volume,
                              semicircle, to_parametric, volume)

coefficients = st.lists(st.floats(-0.3, 0.3), min_size=0, max_size=5).map(
    lambda c: [1.0] + [v / (k + 2) ** 2 for k, v in enumerate(c)])


def test_grid_is_mirror_symmetric_with_exact_ends():
    for kind in ("uniform", "cosine"):
        x = make_grid(2.0, 101, kind)
        assert x[0] == -2.0 and x[-1] == 2.0
        assert np.array_equal(x, -x[::-1])
        assert np.all(np.diff(x) > 0)


def test_unknown_grid_kind_rejected():
    with pytest.raises(DomainError):
        make_grid(1.0, 11, "random")


@given(coefficients)
def test_spectral_area_closed_form_matches_quadrature(c):
    sp = SpectralForm(1.0, tuple(c))
    x = np.linspace(-1, 1, 20001)
    assert sp.area() == pytest.approx(np.trapezoid(sp.f(x), x), rel=1e-7)


@given(coefficients)
def test_spectral_derivatives_match_differences(c):
    sp = SpectralForm(1.5, tuple(c))
    x = np.linspace(-1.4, 1.4, 57)
    h = 1e-6
    assert np.allclose(sp.df(x), (sp.f(x + h) - sp.f(x - h)) / (2 * h), atol=1e-6)
    assert np.allclose(sp.d2f(x), (sp.df(x + h) - sp.df(x - h)) / (2 * h), atol=1e-5)


def test_curve_validation():
    x = np.linspace(-1, 1, 5)
    with pytest.raises(MalformedCurveError):
        GraphCurve(x, np.array([0.1, 1, 1, 1, 0]))
    with pytest.raises(MalformedCurveError):
        GraphCurve(x, np.array([0, 1, 0, 1, 0.0]))
    with pytest.raises(MalformedCurveError):
        GraphCurve(x[::-1], np.array([0, 1, 1, 1, 0.0]))
    with pytest.raises(MalformedCurveError):
        GraphCurve(x[:2], np.array([0.0, 0.0]))


def test_semicircle_measures():
    c = semicircle(2049)
    assert volume(c) == pytest.approx(math.pi / 2, rel=1e-6)
    assert perimeter(c) == pytest.approx(math.pi, rel=1e-6)


def test_cosine_bump_measures():
    c = cosine_bump(513, amplitude=0.7)
    assert volume(c) == pytest.approx(0.7, rel=1e-12)
    fp = lambda x: -0.35 * math.pi * np.sin(math.pi * x)
    from scipy.integrate import quad
    exact = quad(lambda x: math.sqrt(1 + fp(x) ** 2), -1, 1, epsabs=1e-13)[0]
    assert perimeter(c) == pytest.approx(exact, rel=1e-10)


def test_gamma0_has_unit_area():
    assert volume(gamma0()) == pytest.approx(1.0, rel=1e-8)


@given(st.floats(0.2, 5.0))
def test_dilation_scales_measures(s):
    c = cosine_bump(257)
    d = c.scaled(s)
    assert volume(d) == pytest.approx(s * s * volume(c), rel=1e-10)
    assert perimeter(d) == pytest.approx(s * perimeter(c), rel=1e-10)


@given(st.floats(0.1, 10.0))
def test_rescale_to_volume(v):
    d = rescale_to_volume(semicircle(513), v)
    assert volume(d) == pytest.approx(v, rel=1e-8)


def test_to_parametric_is_unit_speed():
    p = to_parametric(cosine_bump(257), 401)
    dt = np.diff(p.t)
    assert np.allclose(dt, dt[0])
    chords = np.hypot(*np.diff(p.points, axis=0).T)
    assert np.all(chords <= dt * (1 + 1e-6))
    assert p.total_length == pytest.approx(perimeter(cosine_bump(257)), rel=1e-8)
    assert p.points[0, 1] == 0 and p.points[-1, 1] == 0


def test_parametric_rejects_bad_polylines():
    t = np.linspace(0, 2, 5)
    below = np.column_stack([t - 1, [0, -0.1, 0, 0, 0]])
    with pytest.raises(MalformedCurveError):
        ParametricCurve(below, t, 2.0)
    with pytest.raises(MalformedCurveError):
        ParametricCurve(np.zeros((5, 2)), np.zeros(5), 0.0)


def test_self_intersection_detection():
    bowtie = np.array([[0, 0], [1, 1], [1, 0], [0, 1.0]])
    assert has_self_intersection(bowtie)
    assert not has_self_intersection(np.array([[0, 0], [1, 1], [2, 0], [3, 1.0]]))


def test_hausdorff():
    c = cosine_bump(257)
    assert hausdorff_distance(c, c) == pytest.approx(0.0, abs=1e-12)
    assert hausdorff_distance(c, c.with_height(1.1)) == pytest.approx(0.1, rel=1e-3)


def test_arclength_grid_is_symmetric_and_increasing():
    x = arclength_grid(semicircle(129), 257)
    assert np.all(np.diff(x) > 0)
    assert np.allclose(x, -x[::-1], atol=1e-15)
    # steep ends get more stations than the uniform grid would give
    assert np.sum(x > 0.99) > 257 * 0.005 / 2


def test_boundary_angle_conventions():
    c = cosine_bump(65, amplitude=0.5)
    a = boundary_angle(c, "arctan").curve
    b = boundary_angle(c, "arcsin").curve
    s = c.slope()
    assert np.allclose(a, np.arctan(s)) and np.allclose(b, np.arcsin(s))
    with pytest.raises(DomainError):
        boundary_angle(cosine_bump(65, amplitude=2.0), "arcsin")
