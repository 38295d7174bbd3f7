"""End-to-end acceptance checks, one test per criterion.

Each test prints its measured quantities; the terminal summary (see
``conftest.py``) adds one PASS/FAIL line per criterion.
"""

import math
import time

import numpy as np
import pytest
from scipy.integrate import quad

from tactoid.asymptotics import (PROFILE_COEFFICIENT, SQRT_2PI, cusped_semicircle,
                                 large_volume_sweep, ode_check, small_volume_sweep)
from tactoid.cli import main as cli_main
from tactoid.diagnostics import (as_parametric, beta_sq_integral, diagnose, vanishing_modulus)
from tactoid.energy import E0, F_ratio, baseline_gamma0
from tactoid.field import (dirichlet_energy as D, green_identity_defect, linear_extension_field,
                           solve_harmonic, solve_test_domain)
from tactoid.geometry import (GraphCurve, SpectralForm, cosine_bump, gamma0, hausdorff_distance,
                              rescale_to_volume, semicircle)
from tactoid.optimize import (OptimConfig, Perturbation, ShapeParams, decreases_monotonically,
                              el_refinement_study, el_residual,
                              functional_value, minimize, perturbed_curve, shape_gradient)

pytestmark = pytest.mark.slow

E0_MIN = 3.0 * math.pi ** (2.0 / 3.0)


# 1 -----------------------------------------------------------------------------------

def test_criterion_1_baseline_reproduction():
    t = time.perf_counter()
    rep = baseline_gamma0(resolution=(1025, 257))
    elapsed = time.perf_counter() - t
    ex = rep.extras
    print(f"quadrature {ex['quadrature_total']:.10f}  grid {ex['grid_total']:.6f}  "
          f"rel {ex['grid_vs_quadrature']:.2e}  self-consistency {ex['self_consistency']:.1e}  "
          f"reference {ex['reference_value']} (deviation {ex['reference_deviation']:+.4f})  "
          f"{elapsed:.1f}s")
    assert ex["self_consistency"] <= 1e-8
    assert ex["grid_vs_quadrature"] < 0.01
    assert ex["reference_value"] == 12.65
    assert elapsed < 30.0


# 2 -----------------------------------------------------------------------------------

MANUFACTURED = {
    "xy": lambda X, Y: X * Y,
    "x^2-y^2": lambda X, Y: X**2 - Y**2,
    "Re z^3": lambda X, Y: X**3 - 3 * X * Y**2,
}


def _manufactured_error(data, n_xi):
    x = np.linspace(-1.0, 1.0, n_xi)
    f = 1.0 + 0.3 * np.cos(0.5 * math.pi * x)
    fld = solve_test_domain(x, f, data, (n_xi - 1) // 2 + 1)
    X, Y = fld.grid.physical()
    return float(np.max(np.abs(fld.theta - data(X, Y))))


def test_criterion_2_harmonic_solver_order():
    for name, data in MANUFACTURED.items():
        errs = [_manufactured_error(data, n) for n in (65, 129, 257, 513)]
        orders = [math.log2(errs[i] / errs[i + 1]) for i in range(3)]
        print(f"{name}: errors {['%.2e' % e for e in errs]} orders {['%.3f' % o for o in orders]}")
        assert min(orders) >= 1.8
    defect = green_identity_defect(solve_harmonic(gamma0(1025), (1025, 257)))
    print(f"Green-identity defect at 1025x257: {defect:.3%}")
    assert defect < 0.02


# 3 -----------------------------------------------------------------------------------

def test_criterion_3_dirichlet_principle():
    curves = {
        "cosine a=0.5": cosine_bump(257, amplitude=0.5),
        "cosine a=2": cosine_bump(257, amplitude=2.0),
        "gamma0": gamma0(257),
        "profile g": GraphCurve.from_spectral([PROFILE_COEFFICIENT], 1.0, 257),
        "three modes": GraphCurve.from_spectral([1.0, 0.2, -0.1], 1.0, 257),
        "cusped eps=0.1": cusped_semicircle(0.1, 257),
    }
    for name, c in curves.items():
        h = D(solve_harmonic(c, (257, 65)))
        lin = D(linear_extension_field(c, (257, 65)))
        print(f"{name}: harmonic {h:.6f} linear {lin:.6f} margin {lin - h:.3e}")
        assert lin - h >= 1e-6


# 4 -----------------------------------------------------------------------------------

def _random_pair(rng, K=6):
    k = np.arange(K)
    c = np.zeros(K)
    c[0] = 1.0
    c[1:] = 0.2 * rng.standard_normal(K - 1) / (k[1:] + 1) ** 2
    dc = rng.standard_normal(K) / (k + 1) ** 2
    p = ShapeParams(tuple(c))
    sp, dsp = p.spectral(), SpectralForm(1.0, tuple(dc))
    pert = Perturbation(lambda x: 2 * sp.h(x) * dsp.h(x),
                        lambda x: 2 * (sp.dh(x) * dsp.h(x) + sp.h(x) * dsp.dh(x)))
    return p, pert


def test_criterion_4_shape_gradient_validation():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for trial in range(10):
        p, pert = _random_pair(rng)
        grads = {}
        for res in ((513, 129), (1025, 257)):
            grads[res[0]] = shape_gradient(p.curve(res[0]), pert, "E", 1.0, res, form="boundary")
        fine = grads[1025]
        # Richardson combination of the two boundary-form Dirichlet rates
        dD = (4.0 * fine.dirichlet_rate - grads[513].dirichlet_rate) / 3.0
        # the perimeter and volume parts are exact quadratures of smooth integrands
        total = dD + (fine.total - fine.dirichlet_rate)
        curve = p.curve(1025)
        cm = solve_harmonic(curve, (1025, 257)).clip_margin
        t = 1e-4
        plus = functional_value(perturbed_curve(curve, pert, t), "E", 1.0, (1025, 257),
                                clip_margin=cm)
        minus = functional_value(perturbed_curve(curve, pert, -t), "E", 1.0, (1025, 257),
                                 clip_margin=cm)
        fd = (plus - minus) / (2 * t)
        rel = abs(total - fd) / abs(fd)
        worst = max(worst, rel)
        print(f"pair {trial}: boundary {total:.8f} fd {fd:.8f} rel {rel:.2e}")
    elapsed = time.perf_counter() - t0
    print(f"worst relative error {worst:.2e}, {elapsed:.0f}s")
    assert worst <= 1e-3
    assert elapsed < 300.0


# 5 -----------------------------------------------------------------------------------

def test_criterion_5_small_volume_profile():
    # analytic-integration oracle for the target value, before any optimization
    c = PROFILE_COEFFICIENT
    g = lambda x: c**2 * (1 + math.cos(math.pi * x)) / 2
    # g'^2 / g with 1 + cos = 2 cos^2(pi x / 2) cancelled, so the integrand
    # has no 0/0 at the ends
    quot = quad(lambda x: (math.pi * c * math.sin(0.5 * math.pi * x)) ** 2, -1, 1,
                epsabs=1e-13, epsrel=1e-13)[0]
    area = quad(g, -1, 1, epsabs=1e-14)[0]
    oracle = quot + 2 / math.sqrt(area)
    print(f"oracle E0(g) {oracle:.15f}  3 pi^(2/3) {E0_MIN:.15f}")
    assert abs(oracle - E0_MIN) <= 1e-10

    for label, start in (("cosine start", ShapeParams.cosine(8)),
                         ("perturbed start",
                          ShapeParams((1.0, 0.2, -0.1, 0.05, 0.0, 0.02, 0.0, -0.01)))):
        r = minimize(start, OptimConfig(functional="E0", K=8, tol=1e-6, max_iter=300))
        x = np.linspace(-1, 1, 20001)
        f = r.params.spectral().f(x)
        gx = c**2 * (1 + np.cos(math.pi * x)) / 2
        l2 = math.sqrt(np.trapezoid((f - gx) ** 2, x))
        print(f"{label}: L2 {l2:.2e}  E0 {r.energy_trace[-1]:.12f}  "
              f"gap {r.energy_trace[-1] - E0_MIN:.1e}  iterations {r.iterations}")
        assert l2 <= 1e-3
        assert abs(r.energy_trace[-1] - E0_MIN) <= 1e-6
        assert abs(E0(r.params.curve(257)).total - E0_MIN) <= 1e-6
    ode = ode_check()
    print(f"ode residual {ode['residual']:.1e}")
    assert ode["residual"] <= 1e-10


# 6 -----------------------------------------------------------------------------------

def test_criterion_6_large_volume_limit():
    sweep = large_volume_sweep([1e4, 1e5, 1e6, 1e7, 1e8], resolution=(1025, 257), workers=1)
    fit = sweep.fits["gap_vs_v"]
    hfit = sweep.fits["harmonic_gap_vs_v"]
    hg = sweep.extras["harmonic_gaps"]
    print("configuration gaps", ["%.5f" % g for g in sweep.gaps])
    print("harmonic gaps     ", ["%.5f" % g for g in hg])
    print(f"configuration exponent {fit.slope:.4f} (endpoint {fit.endpoint_slope:.4f}); "
          f"harmonic exponent {hfit.slope:.4f}; "
          f"F gap vs eps {sweep.fits['perimeter_gap_vs_eps'].slope:.4f}")
    assert abs(fit.slope + 0.25) <= 0.05
    assert all(g > 0 for g in sweep.gaps) and decreases_monotonically(sweep.gaps)
    # the harmonic energy sits below the configuration energy and converges too
    assert all(0 < h <= g for h, g in zip(hg, sweep.gaps))
    assert decreases_monotonically(hg)

    t = time.perf_counter()
    r = minimize(ShapeParams((1.0,)), functional="E_v", v=1e6, K=16, grid=(257, 65), tol=1e-5,
                 max_iter=200)
    curve = r.params.curve(1025)
    F_rel = F_ratio(curve) / SQRT_2PI - 1.0
    # compare at equal volume: the unit semicircle has area pi / 2
    dH = hausdorff_distance(rescale_to_volume(curve, math.pi / 2), semicircle(1025))
    print(f"optimized v=1e6: F/sqrt(2 pi) - 1 = {F_rel:.4f}, Hausdorff {dH:.4f}, "
          f"{r.iterations} iterations, {time.perf_counter() - t:.0f}s")
    assert abs(F_rel) <= 0.02
    assert dH <= 0.05


# 7 -----------------------------------------------------------------------------------

def test_criterion_7_thin_droplet_sandwich():
    eps = [0.2 * 2 ** (-k / 2) for k in range(7)]  # 0.2 ... 0.025
    sweep = small_volume_sweep(eps, resolution=(513, 129), workers=1)
    fit = sweep.fits["dirichlet_vs_eps"]
    hfit = sweep.fits["harmonic_dirichlet_vs_eps"]
    tfit = sweep.fits["total_vs_eps"]
    print(f"D/eps window {sweep.extras['window']:.4f} (harmonic "
          f"{sweep.extras['harmonic_window']:.4f}); slope {fit.slope:.4f} (harmonic "
          f"{hfit.slope:.4f}); total exponent {tfit.slope:.4f}")
    assert sweep.extras["window"] <= 5.0 and sweep.extras["harmonic_window"] <= 5.0
    assert abs(fit.slope - 1.0) <= 0.1 and abs(hfit.slope - 1.0) <= 0.1
    assert abs(tfit.slope - 2.0 / 3.0) <= 0.1


# 8 -----------------------------------------------------------------------------------

def _corner(alpha, n):
    half = (n - 1) // 2
    s = np.linspace(1.0, 0.0, half + 1)
    left = -s[:, None] * np.array([math.sin(alpha / 2), -math.cos(alpha / 2)])
    right = s[::-1][1:, None] * np.array([math.sin(alpha / 2), math.cos(alpha / 2)])
    return np.vstack([left, right])


def test_criterion_8_diagnostics_oracles():
    seg = np.column_stack([np.linspace(-1, 1, 513), np.zeros(513)])
    rep = diagnose(seg)
    trivial = [rep.two_point_constant - 1, rep.chord_arc_constant - 1,
               max(np.abs(rep.vanishing_modulus["value"])), max(np.abs(rep.vmo_table["value"])),
               rep.beta_sq_integral, rep.mobius_energy, rep.h32_seminorm,
               max(np.abs(rep.polygon_defect_partial_sums))]
    print("segment deviations from trivial values", ["%.1e" % v for v in trivial])
    assert max(abs(v) for v in trivial) <= 1e-12

    semi = semicircle(2049)
    ca = diagnose(semi, n_points=1025).chord_arc_constant
    r = np.array([0.02, 0.05, 0.1, 0.2])
    vm = np.asarray(vanishing_modulus(as_parametric(semi, 2049), r)["value"])
    print(f"semicircle chord-arc {ca:.6f} (pi/2 = {math.pi / 2:.6f}); "
          f"modulus / (r^2/24) {['%.4f' % v for v in vm / (r**2 / 24)]}")
    assert abs(ca - math.pi / 2) <= 1e-3
    assert np.all(np.abs(vm / (r**2 / 24) - 1) <= 0.1)

    for alpha in (math.pi / 2, 2 * math.pi / 3):
        target = 1 / math.sin(alpha / 2) - 1
        plateau = np.asarray(vanishing_modulus(_corner(alpha, 1025), [0.005, 0.01, 0.02, 0.05])
                             ["value"])
        betas = [beta_sq_integral(as_parametric(_corner(alpha, n), n))["value"]
                 for n in (129, 257, 513, 1025)]
        print(f"corner {math.degrees(alpha):.0f} deg: plateau/target "
              f"{['%.5f' % (v / target) for v in plateau]}; beta^2 integral "
              f"{['%.4f' % b for b in betas]}")
        assert np.all(np.abs(plateau / target - 1) <= 0.01)
        assert decreases_monotonically([-b for b in betas])


# 9 -----------------------------------------------------------------------------------

def test_criterion_9_el_residual_regression():
    c0 = PROFILE_COEFFICIENT
    ns = (257, 513, 1025, 2049)
    good = [el_residual(GraphCurve.from_spectral([c0], 1.0, n), terms="E0").residual_norm
            for n in ns]
    bad = [el_residual(GraphCurve.from_spectral([c0, 0.3 * c0], 1.0, n), terms="E0").residual_norm
           for n in ns]
    print("E0 minimizer", ["%.2e" % v for v in good])
    print("E0 control   ", ["%.5f" % v for v in bad])
    assert decreases_monotonically(good)
    assert not decreases_monotonically(bad)

    grids = [(65, 17), (129, 33), (257, 65), (513, 129)]
    for K in (4, 6):
        study = el_refinement_study(ShapeParams.cosine(K), grids, v=1.0)
        print(f"Problem P, K={K}:", ["%.3e" % v for v in study.residuals],
              "converged", study.converged)
        assert all(study.converged)
        assert study.decreasing
    control = el_refinement_study(ShapeParams.cosine(1), grids, v=1.0, optimize=False)
    print("Problem P control (unit cosine):", ["%.4f" % v for v in control.residuals])
    assert not control.decreasing


# 10 ----------------------------------------------------------------------------------

@pytest.mark.parametrize("args", [
    ["baseline"],
    ["asymptotics", "--sweep", "small", "--grid", "257x65"],
    ["optimize", "--functional", "E0", "--K", "8"],
    ["diagnose", "--builtin", "semicircle", "--grid", "257x65"],
])
def test_criterion_10_determinism(tmp_path, monkeypatch, args):
    monkeypatch.delenv("TACTOID_OUT", raising=False)
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert cli_main([*args, "--serial", "--out", str(out)]) == 0
        outs.append(out)
    reports = sorted(p.name for p in outs[0].iterdir() if not p.name.endswith(".meta.json"))
    assert reports
    for name in reports:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name
    print(f"{args[0]}: {len(reports)} files byte-identical")
