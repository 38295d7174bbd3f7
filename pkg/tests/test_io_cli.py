import json
import math

import numpy as np
import pytest

from tactoid import io
from tactoid.cli import EXIT_DIVERGED, EXIT_INVALID, EXIT_OK, builtin_curve, main
from tactoid.errors import MalformedCurveError
from tactoid.geometry import cosine_bump


def test_curve_csv_roundtrip(tmp_path):
    c = cosine_bump(65)
    p = io.write_curve_csv(c, tmp_path / "c.csv")
    d = io.read_curve(p)
    assert np.array_equal(d.x, c.x) and np.array_equal(d.f, c.f)


def test_spectral_roundtrip(tmp_path):
    p = io.write_spectral([1.0, 0.1], 1.0, tmp_path / "s.json")
    c = io.read_curve(p, n=129)
    assert c.spectral is not None and c.spectral.coefficients == (1.0, 0.1)


@pytest.mark.parametrize("body", ["", "a,b\n0,0\n", "x,y\n0,0\n1,zz\n2,0\n", "x,y\n0,0\n1,1\n"])
def test_malformed_csv(tmp_path, body):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(MalformedCurveError):
        io.read_curve_csv(p)


def test_malformed_spectral(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"a": -1, "coefficients": [1]}')
    with pytest.raises(MalformedCurveError):
        io.read_spectral(p)


def test_json_encodes_non_finite_values():
    text = io.dumps({"b": math.inf, "a": [math.nan, -math.inf, np.float64(1.5)], "c": np.int64(2)})
    assert json.loads(text) == {"a": ["nan", "-inf", 1.5], "b": "inf", "c": 2}
    assert text.index('"a"') < text.index('"b"')


def test_metadata_sidecar(tmp_path):
    p = io.write_json({"x": 1}, tmp_path / "r.json")
    side = io.write_metadata(p)
    assert side.name == "r.meta.json"
    assert "written_at" in json.loads(side.read_text())


def test_svg_plot_is_deterministic(tmp_path):
    pytest.importorskip("matplotlib")
    s = {"a": ([1, 2, 3], [1, 4, 9])}
    a = io.write_svg_plot(tmp_path / "a.svg", s, loglog=True).read_bytes()
    b = io.write_svg_plot(tmp_path / "b.svg", s, loglog=True).read_bytes()
    assert a == b and a.startswith(b"<?xml")


def test_builtin_curves():
    for name in ("gamma0", "semicircle", "cosine", "profile_g", "cusped:0.1"):
        assert builtin_curve(name, 65).n == 65


def _run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path), "--serial"])


def test_cli_solve_and_energy(tmp_path, monkeypatch):
    monkeypatch.delenv("TACTOID_OUT", raising=False)
    assert _run(tmp_path, "solve", "--builtin", "cosine", "--grid", "65x17") == EXIT_OK
    rep = json.loads((tmp_path / "solve.json").read_text())
    assert rep["config"]["grid"] == [65, 17] and rep["dirichlet"] > 0
    assert (tmp_path / "field.csv").exists() and (tmp_path / "solve.meta.json").exists()
    assert _run(tmp_path, "energy", "--builtin", "cosine", "--grid", "129x33", "--v", "100") == 0
    rep = json.loads((tmp_path / "energy.json").read_text())
    assert rep["report"]["functional"] == "E_v"


def test_cli_curve_file(tmp_path, monkeypatch):
    monkeypatch.delenv("TACTOID_OUT", raising=False)
    src = io.write_curve_csv(cosine_bump(65), tmp_path / "in.csv")
    assert _run(tmp_path, "energy", "--curve", str(src), "--functional", "E0") == EXIT_OK


def test_cli_divergence_exit_code(tmp_path, monkeypatch):
    monkeypatch.delenv("TACTOID_OUT", raising=False)
    code = _run(tmp_path, "energy", "--builtin", "semicircle", "--functional", "E0",
                "--grid", "1025x17", "--divergence-as-error")
    assert code == EXIT_DIVERGED


def test_cli_validation_errors(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("TACTOID_OUT", raising=False)
    assert _run(tmp_path, "energy", "--grid", "abc") == EXIT_INVALID
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "validation"
    assert _run(tmp_path, "energy", "--curve", str(tmp_path / "missing.csv")) == EXIT_INVALID
    assert _run(tmp_path, "nonsense") == EXIT_INVALID
    assert _run(tmp_path, "energy", "--builtin", "cusped:0.9", "--grid", "65x17") == EXIT_INVALID


def test_cli_out_environment_override(tmp_path, monkeypatch):
    target = tmp_path / "env"
    monkeypatch.setenv("TACTOID_OUT", str(target))
    assert _run(tmp_path / "ignored", "asymptotics", "--sweep", "ode") == EXIT_OK
    assert (target / "ode_check.json").exists()
    assert json.loads((target / "ode_check.json").read_text())["result"]["residual"] <= 1e-10


def test_cli_diagnose_polyline(tmp_path, monkeypatch):
    monkeypatch.delenv("TACTOID_OUT", raising=False)
    p = tmp_path / "poly.csv"
    t = np.linspace(0, 1, 65)
    np.savetxt(p, np.column_stack([t, np.zeros_like(t)]), delimiter=",", header="x,y",
               comments="")
    assert _run(tmp_path, "diagnose", "--curve", str(p)) == EXIT_OK
    rep = json.loads((tmp_path / "diagnostics.json").read_text())["report"]
    assert rep["chord_arc_constant"] == pytest.approx(1.0, abs=1e-12)


def test_cli_optimize_E0(tmp_path, monkeypatch):
    monkeypatch.delenv("TACTOID_OUT", raising=False)
    assert _run(tmp_path, "optimize", "--functional", "E0", "--K", "4") == EXIT_OK
    rep = json.loads((tmp_path / "optimize.json").read_text())
    assert rep["el_residual"]["norm"] < 1e-3
    assert (tmp_path / "optimized_curve.csv").exists()


def test_cli_reports_are_reproducible(tmp_path, monkeypatch):
    monkeypatch.delenv("TACTOID_OUT", raising=False)
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["asymptotics", "--sweep", "small", "--grid", "129x33", "--serial",
                     "--out", str(d)]) == EXIT_OK
    assert (a / "sweep_small.json").read_bytes() == (b / "sweep_small.json").read_bytes()
    assert (a / "sweep_small.csv").read_bytes() == (b / "sweep_small.csv").read_bytes()
