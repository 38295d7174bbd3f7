import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tactoid.errors import DegenerateDomainError, DomainError
from tactoid.field import (assemble, default_clip_margin, dirichlet_energy, dtn_trace,
                           energy_density_integral, green_identity_defect, linear_extension_field,
                           pcg, solve_harmonic, solve_test_domain)
from tactoid.geometry import cosine_bump, semicircle


def _domain(n):
    x = np.linspace(-1.0, 1.0, n)
    return x, 1.0 + 0.3 * np.cos(0.5 * math.pi * x)


def _max_error(data, n_xi):
    x, f = _domain(n_xi)
    fld = solve_test_domain(x, f, data, (n_xi - 1) // 2 + 1)
    X, Y = fld.grid.physical()
    return float(np.max(np.abs(fld.theta - data(X, Y))))


def test_linear_data_is_reproduced_exactly():
    data = lambda X, Y: 2.0 * X - 3.0 * Y + 0.5
    x, f = _domain(33)
    fld = solve_test_domain(x, f, data, 17)
    X, Y = fld.grid.physical()
    assert np.max(np.abs(fld.theta - data(X, Y))) < 1e-9


def test_manufactured_solution_converges_at_second_order():
    data = lambda X, Y: X * Y
    errs = [_max_error(data, n) for n in (33, 65, 129)]
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(orders) > 1.8


def test_constant_field_has_zero_energy():
    x, f = _domain(33)
    fld = solve_test_domain(x, f, lambda X, Y: np.full_like(X, 4.0), 17)
    assert dirichlet_energy(fld) == pytest.approx(0.0, abs=1e-12)


def test_quadratic_form_agrees_with_cellwise_integral():
    fld = solve_harmonic(cosine_bump(129), (129, 33))
    assert energy_density_integral(fld) == pytest.approx(dirichlet_energy(fld), rel=1e-10)


def test_stiffness_is_symmetric_positive_semidefinite():
    fld = linear_extension_field(cosine_bump(33), (33, 17))
    K = assemble(fld.grid)
    assert abs(K - K.T).max() < 1e-12
    rng = np.random.default_rng(0)
    for _ in range(5):
        v = rng.standard_normal(K.shape[0])
        assert v @ (K @ v) >= -1e-12
    ones = np.ones(K.shape[0])
    assert np.max(np.abs(K @ ones)) < 1e-10


@given(st.floats(0.2, 1.5))
@settings(max_examples=8)
def test_harmonic_beats_linear_extension(amp):
    c = cosine_bump(129, amplitude=amp)
    h = dirichlet_energy(solve_harmonic(c, (129, 33)))
    lin = dirichlet_energy(linear_extension_field(c, (129, 33)))
    assert h <= lin + 1e-12


def test_shallow_bump_energy_is_linear_in_amplitude():
    # the angle scales with the amplitude and the domain thickness does too,
    # so |grad Theta|^2 ~ amp^2 / amp^2 over an area ~ amp
    e1 = dirichlet_energy(solve_harmonic(cosine_bump(129, amplitude=0.01), (129, 33)))
    e2 = dirichlet_energy(solve_harmonic(cosine_bump(129, amplitude=0.02), (129, 33)))
    assert e2 / e1 == pytest.approx(2.0, rel=1e-3)


def test_solution_is_mirror_antisymmetric_for_even_curves():
    fld = solve_harmonic(cosine_bump(129), (129, 33))
    assert np.allclose(fld.theta, -fld.theta[::-1, :], atol=1e-10)


def test_green_identity_on_smooth_curve():
    fld = solve_harmonic(cosine_bump(257), (257, 65))
    assert green_identity_defect(fld) < 0.02


def test_dtn_trace_marks_clipped_columns():
    fld = solve_harmonic(cosine_bump(129), (129, 33), clip_margin=3)
    tr = dtn_trace(fld)
    assert not tr.valid[:3].any() and not tr.valid[-3:].any()
    assert tr.valid[3:-3].all()


def test_direct_and_iterative_solvers_agree():
    c = cosine_bump(65)
    a = solve_harmonic(c, (65, 17), method="direct")
    b = solve_harmonic(c, (65, 17), method="cg", tolerance=1e-12)
    assert np.max(np.abs(a.theta - b.theta)) < 1e-8


def test_pcg_solves_spd_system():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((20, 20))
    A = A @ A.T + 20 * np.eye(20)
    b = rng.standard_normal(20)
    x, relres, its = pcg(A, b, tol=1e-12)[:3]
    assert np.allclose(A @ x, b, atol=1e-9)


def test_clip_margin_and_resolution_errors():
    f = np.array([0.0, 1e-5, 0.5, 1.0, 0.5, 1e-5, 0.0])
    assert default_clip_margin(f) == 2
    with pytest.raises(DomainError):
        solve_harmonic(cosine_bump(17), (17, 9))
    with pytest.raises(DomainError):
        solve_harmonic(cosine_bump(65), (65, 17), tolerance=0.0)


def test_test_domain_rejects_zero_width():
    x = np.linspace(-1, 1, 33)
    with pytest.raises(DegenerateDomainError):
        solve_test_domain(x, 1 - x**2, lambda X, Y: X, 17)


def test_semicircle_vertical_ends_are_handled():
    fld = solve_harmonic(semicircle(257), (257, 65))
    assert math.isfinite(dirichlet_energy(fld))
