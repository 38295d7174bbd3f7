import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tactoid.energy import (E0, E0_gradient, E_eps, E_v, F, F_ratio, compress,
                            refinement_diverges, total_energy)
from tactoid.errors import DomainError
from tactoid.geometry import GraphCurve, cosine_bump, semicircle


def _cosine_E0(c):
    # f = c (1 + cos pi x) / 2 = (sqrt(c) cos(pi x / 2))^2
    return c * math.pi**2 + 2.0 / math.sqrt(c)


@given(st.floats(0.05, 3.0))
def test_E0_closed_form_for_scaled_cosine(c):
    curve = GraphCurve.from_spectral([math.sqrt(c)], 1.0, 257)
    assert E0(curve).total == pytest.approx(_cosine_E0(c), rel=1e-12)


def test_E0_minimum_value():
    c = math.pi ** (-4.0 / 3.0)
    curve = GraphCurve.from_spectral([math.sqrt(c)], 1.0, 257)
    assert E0(curve).total == pytest.approx(3 * math.pi ** (2.0 / 3.0), abs=1e-12)


def test_E0_routes_agree():
    curve = GraphCurve.from_spectral([1.0, 0.2, -0.05], 1.0, 2049)
    spec = E0(curve, route="spectral").total
    samp = E0(curve, route="samples")
    assert samp.total == pytest.approx(spec, rel=1e-5)
    assert not samp.diverged


def test_E0_flags_vertical_ends():
    assert E0(semicircle(1025), route="samples").diverged


@given(st.lists(st.floats(-0.2, 0.2), min_size=1, max_size=5))
@settings(max_examples=15)
def test_E0_gradient_matches_finite_differences(tail):
    c = np.array([1.0] + tail)
    _, g = E0_gradient(c)
    h = 1e-6
    for k in range(c.size):
        e = np.zeros_like(c)
        e[k] = h
        fd = (E0_gradient(c + e)[0] - E0_gradient(c - e)[0]) / (2 * h)
        assert g[k] == pytest.approx(fd, rel=1e-6, abs=1e-6)


def test_E0_gradient_vanishes_at_minimizer():
    _, g = E0_gradient([math.pi ** (-2.0 / 3.0)])
    assert abs(g[0]) < 1e-12


def test_report_total_is_its_documented_combination():
    c = cosine_bump(129)
    for rep in (total_energy(c, (129, 33)), E_v(c, 50.0, (129, 33)), E_eps(c, 0.1, (129, 33)),
                E0(c), F(c)):
        assert rep.check() < 1e-12 * max(1.0, abs(rep.total))


@given(st.floats(0.3, 4.0))
@settings(max_examples=6)
def test_E_v_is_dilation_invariant(s):
    c = cosine_bump(129)
    a = E_v(c, 10.0, (129, 33)).total
    b = E_v(c.scaled(s), 10.0, (129, 33)).total
    assert b == pytest.approx(a, rel=1e-9)


def test_F_ratio_of_semicircle():
    assert F_ratio(semicircle(4097)) == pytest.approx(math.pi / math.sqrt(math.pi / 2), rel=1e-6)


def test_E_eps_at_eps_one_is_unscaled_energy():
    c = cosine_bump(129)
    a = E_eps(c, 1.0, (129, 33))
    b = total_energy(c, (129, 33), check_divergence=False)
    assert a.dirichlet == pytest.approx(b.dirichlet, rel=1e-12)
    # the unit cosine has unit area, so the ratio term is the plain perimeter
    assert a.total == pytest.approx(b.total, rel=1e-12)


def test_compress_scales_heights():
    c = cosine_bump(33)
    assert np.allclose(compress(c, 0.125).f, 0.25 * c.f)


def test_E_eps_linear_extension_bounds_harmonic():
    c = cosine_bump(129)
    h = E_eps(c, 0.05, (129, 33))
    lin = E_eps(c, 0.05, (129, 33), extension="linear")
    assert h.dirichlet <= lin.dirichlet


def test_E_eps_rejects_bad_arguments():
    with pytest.raises(DomainError):
        E_eps(cosine_bump(65), 0.0)
    with pytest.raises(DomainError):
        E_eps(cosine_bump(65), 0.1, (65, 17), extension="quadratic")


def test_refinement_divergence_rule():
    assert not refinement_diverges([1.0, 1.1, 1.125])
    assert refinement_diverges([1.0, 2.0, 3.0])
    assert refinement_diverges([1.0, 5.0, 12.0])
    assert refinement_diverges([1.0, float("nan"), 2.0])


def test_total_energy_normalizes_to_unit_area():
    rep = total_energy(cosine_bump(129, amplitude=3.0), (129, 33), normalize=True)
    assert rep.volume == pytest.approx(1.0, rel=1e-9)
    assert not rep.diverged
