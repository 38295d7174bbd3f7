"""Command-line front end: ``tactoid <command> [options]``.

Commands: solve, energy, optimize, diagnose, asymptotics, baseline.  Every
run writes a JSON report that embeds the fully resolved configuration, plus a
``.meta.json`` sidecar holding the timestamp and environment, so report files
from identical serial runs are byte-identical.

Exit status: 0 success, 1 invalid input, 2 solver failure, 3 divergence
(only with ``--divergence-as-error``).  Errors are printed to stderr as one
JSON line ``{"error": ..., "kind": ..., "message": ...}``.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

from . import asymptotics as asy
from . import diagnostics as dg
from . import energy as en
from . import io
from .errors import SolverFailure, TactoidError
from .field import (dirichlet_energy, field_metadata, green_identity_defect, solve_harmonic,
                    write_field_csv)
from .geometry import GraphCurve, cosine_bump, gamma0, semicircle

COMMANDS = ("solve", "energy", "optimize", "diagnose", "asymptotics", "baseline")
BUILTINS = ("gamma0", "semicircle", "cosine", "cusped:<eps>", "profile_g")
SWEEPS = ("small", "large", "gamma", "ode")

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_DIVERGED = 0, 1, 2, 3

logger = logging.getLogger("tactoid")


class ConfigError(TactoidError, ValueError):
    """Invalid command-line configuration."""


@dataclass
class RunConfig:
    command: str
    curve: Optional[str] = None
    builtin: Optional[str] = None
    grid: tuple = (513, 129)
    tol: float = 1e-10
    v: Optional[list] = None
    eps: Optional[list] = None
    K: int = 16
    functional: Optional[str] = None
    sweep: Optional[str] = None
    out: str = "tactoid_out"
    plots: bool = False
    serial: bool = False
    workers: int = 1
    seed: int = 0
    max_iter: int = 200
    divergence_as_error: bool = False
    optimize: bool = False

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.curve and self.builtin:
            raise ConfigError("give either --curve or --builtin, not both")
        nx, ny = self.grid
        if nx < 33 or ny < 17:
            raise ConfigError(f"grid must be at least 33x17, got {nx}x{ny}")
        if not self.tol > 0:
            raise ConfigError("--tol must be positive")
        if self.K < 1:
            raise ConfigError("--K must be at least 1")
        if self.max_iter < 0:
            raise ConfigError("--max-iter must be non-negative")
        if self.v is not None and any(not (x > 0 and math.isfinite(x)) for x in self.v):
            raise ConfigError("--v values must be positive and finite")
        if self.eps is not None and any(not 0 < x <= 1 for x in self.eps):
            raise ConfigError("--eps values must lie in (0, 1]")
        if self.workers < 1:
            raise ConfigError("--workers must be at least 1")
        if self.command == "asymptotics" and self.sweep not in SWEEPS:
            raise ConfigError(f"--sweep must be one of {', '.join(SWEEPS)}")
        if self.functional is not None and self.functional not in ("E", "E_v", "E_eps", "E0"):
            raise ConfigError("--functional must be E, E_v, E_eps or E0")
        if self.builtin is not None:
            builtin_curve(self.builtin, 33)  # validates the name and parameter
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = list(self.grid)
        d.pop("out")  # output location is not part of the computation
        return d


# -- inputs -------------------------------------------------------------------------------

def builtin_curve(name: str, n: int) -> GraphCurve:
    if name == "gamma0":
        return gamma0(n)
    if name == "semicircle":
        return semicircle(n)
    if name == "cosine":
        return cosine_bump(n)
    if name == "profile_g":
        return asy.profile_g(n)
    if name.startswith("cusped:"):
        try:
            eps = float(name.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad cusped parameter in {name!r}") from None
        return asy.cusped_semicircle(eps, n)
    raise ConfigError(f"unknown builtin {name!r}; choose from {', '.join(BUILTINS)}")


def _is_builtin(name: str) -> bool:
    return name in ("gamma0", "semicircle", "cosine", "profile_g") or name.startswith("cusped:")


def load_curve(cfg: RunConfig, default: str = "gamma0") -> GraphCurve:
    if cfg.curve:
        if not Path(cfg.curve).exists() and _is_builtin(cfg.curve):
            return builtin_curve(cfg.curve, cfg.grid[0])
        return io.read_curve(cfg.curve, cfg.grid[0])
    return builtin_curve(cfg.builtin or default, cfg.grid[0])


def _parse_grid(text: str) -> tuple:
    try:
        nx, ny = text.lower().split("x")
        return int(nx), int(ny)
    except ValueError:
        raise ConfigError(f"--grid must look like 513x129, got {text!r}") from None


def _parse_list(text: Optional[str]) -> Optional[list]:
    if text is None:
        return None
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


# -- outputs --------------------------------------------------------------------------------

class Outputs:
    def __init__(self, cfg: RunConfig):
        self.dir = Path(os.environ.get("TACTOID_OUT") or cfg.out)
        self.cfg = cfg
        self.written: list = []

    def report(self, name: str, payload: dict) -> Path:
        body = {"config": self.cfg.to_dict(), **payload}
        path = io.write_json(body, self.dir / f"{name}.json")
        io.write_metadata(path, {"command": self.cfg.command})
        self.written.append(path)
        return path

    def path(self, name: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        p = self.dir / name
        self.written.append(p)
        return p


# -- pipelines ------------------------------------------------------------------------------

def run_solve(cfg: RunConfig, out: Outputs) -> int:
    curve = load_curve(cfg)
    fld = solve_harmonic(curve, cfg.grid, tolerance=cfg.tol)
    write_field_csv(fld, out.path("field.csv"))
    out.report("solve", {
        "curve": curve.name,
        "dirichlet": dirichlet_energy(fld),
        "green_identity_defect": green_identity_defect(fld),
        "field": field_metadata(fld),
    })
    if cfg.plots:
        io.write_svg_plot(out.path("curve.svg"), {curve.name or "curve": (curve.x, curve.f)},
                          title="droplet boundary", xlabel="x", ylabel="y", equal_aspect=True)
    return EXIT_OK


def run_energy(cfg: RunConfig, out: Outputs) -> int:
    curve = load_curve(cfg)
    fn = cfg.functional
    if fn is None:
        fn = "E_v" if cfg.v else ("E_eps" if cfg.eps else "E")
    if fn == "E":
        rep = en.total_energy(curve, cfg.grid, tolerance=cfg.tol, check_divergence=True)
    elif fn == "E_v":
        rep = en.E_v(curve, (cfg.v or [1.0])[0], cfg.grid, tolerance=cfg.tol,
                     check_divergence=True)
    elif fn == "E_eps":
        rep = en.E_eps(curve, (cfg.eps or [0.1])[0], cfg.grid, tolerance=cfg.tol)
    else:
        rep = en.E0(curve)
    out.report("energy", {"curve": curve.name, "report": rep.to_dict()})
    if rep.diverged and cfg.divergence_as_error:
        _error("divergence", "DivergenceFlag",
               f"Dirichlet energy of {curve.name or 'curve'} diverges under refinement")
        return EXIT_DIVERGED
    return EXIT_OK


def run_optimize(cfg: RunConfig, out: Outputs) -> int:
    from .optimize import OptimConfig, ShapeParams, el_residual, minimize

    fn = cfg.functional or ("E_v" if cfg.v else ("E_eps" if cfg.eps else "E0"))
    kw = dict(functional=fn, K=cfg.K, grid=tuple(cfg.grid),
              max_iter=cfg.max_iter, seed=cfg.seed)
    if fn in ("E", "E_v"):
        kw["v"] = (cfg.v or [1.0])[0]
    if fn == "E_eps":
        kw["eps"] = (cfg.eps or [0.05])[0]
    config = OptimConfig(**kw)
    start = ShapeParams.cosine(cfg.K, amplitude=asy.PROFILE_COEFFICIENT ** 2 if fn in ("E0", "E_eps") else 1.0)
    res = minimize(start, config)
    payload = {"result": res.to_dict()}
    if fn == "E0":
        el = el_residual(res.params, terms="E0")
        payload["el_residual"] = {"lambda": el.lambda_estimate, "norm": el.residual_norm}
    curve = res.params.curve(cfg.grid[0])
    io.write_curve_csv(curve, out.path("optimized_curve.csv"))
    io.write_spectral(res.params.coefficients, res.params.a, out.path("optimized_spectral.json"))
    out.report("optimize", payload)
    if cfg.plots:
        io.write_svg_plot(out.path("optimize_energy.svg"),
                          {"energy": (list(range(len(res.energy_trace))), res.energy_trace)},
                          title=f"{fn} during optimization", xlabel="iteration", ylabel=fn)
        io.write_svg_plot(out.path("optimized_curve.svg"), {"optimized": (curve.x, curve.f)},
                          title="optimized boundary", xlabel="x", ylabel="y", equal_aspect=True)
    return EXIT_OK


def run_diagnose(cfg: RunConfig, out: Outputs) -> int:
    if cfg.curve and Path(cfg.curve).suffix.lower() == ".csv":
        # any polyline is accepted here, not only graphs
        import numpy as np

        data = np.loadtxt(cfg.curve, delimiter=",", skiprows=1, ndmin=2)
        curve = data[:, :2]
    else:
        curve = load_curve(cfg, default="semicircle")
    rep = dg.diagnose(curve)
    out.report("diagnostics", {"report": rep.to_dict()})
    for name, text in rep.tables_csv().items():
        out.path(f"{name}.csv").write_text(text)
    if cfg.plots:
        vm = rep.vanishing_modulus
        series = {"vanishing modulus": (vm["r"], [max(v, 1e-300) for v in vm["value"]])}
        io.write_svg_plot(out.path("vanishing_modulus.svg"), series, title="vanishing modulus",
                          xlabel="r", ylabel="sup arc/chord - 1", loglog=True)
    return EXIT_OK


def run_asymptotics(cfg: RunConfig, out: Outputs) -> int:
    res = (max(cfg.grid[0], 33), max(cfg.grid[1], 17))
    if cfg.sweep == "ode":
        out.report("ode_check", {"result": asy.ode_check()})
        return EXIT_OK
    if cfg.sweep == "small":
        sweep = asy.small_volume_sweep(cfg.eps or [0.2, 0.1, 0.05, 0.025], optimize=cfg.optimize,
                                       resolution=res, K=min(cfg.K, 8), workers=cfg.workers)
        key, target = "dirichlet_vs_eps", "1"
    elif cfg.sweep == "large":
        sweep = asy.large_volume_sweep(cfg.v or [1e4, 1e5, 1e6, 1e7, 1e8], resolution=res,
                                       workers=cfg.workers)
        key, target = "gap_vs_v", "-1/4"
    else:
        curve = load_curve(cfg, default="profile_g")
        sweep = asy.gamma_convergence_table(curve, cfg.eps or [0.2, 0.1, 0.05, 0.025],
                                            resolution=res, workers=cfg.workers)
        key, target = "x_term_vs_eps", "4/3"
    out.report(f"sweep_{cfg.sweep}", {"sweep": sweep.to_dict()})
    out.path(f"sweep_{cfg.sweep}.csv").write_text(sweep.to_csv())
    if cfg.plots and key in sweep.fits:
        fit = sweep.fits[key]
        if cfg.sweep == "small":
            ys = [r["dirichlet"] for r in sweep.reports]
        elif cfg.sweep == "large":
            ys = sweep.gaps
        else:
            ys = [row["x_term"] for row in sweep.extras["table"][1:]]
        io.write_svg_plot(out.path(f"sweep_{cfg.sweep}.svg"), {cfg.sweep: (sweep.values, ys)},
                          title=f"{cfg.sweep} sweep", xlabel=sweep.parameter, ylabel="value",
                          loglog=True,
                          annotation=f"fitted slope {fit.slope:.4f} (expected {target})")
    return EXIT_OK


def run_baseline(cfg: RunConfig, out: Outputs) -> int:
    rep = en.baseline_gamma0(resolution=cfg.grid, tolerance=cfg.tol)
    out.report("baseline", {"report": rep.to_dict()})
    return EXIT_OK


PIPELINES = {"solve": run_solve, "energy": run_energy, "optimize": run_optimize,
             "diagnose": run_diagnose, "asymptotics": run_asymptotics, "baseline": run_baseline}


# -- entry point ------------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """Argument errors become validation errors (exit 1), not argparse's exit 2."""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tactoid", description="Liquid-crystal droplet shape tools.")
    p.add_argument("command", choices=COMMANDS)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--curve", help="curve file: CSV with header x,y or spectral JSON")
    src.add_argument("--builtin", help=f"named curve: {', '.join(BUILTINS)}")
    p.add_argument("--grid", default=None, help="field grid NXxNY (default 513x129; optimize 257x65; baseline 1025x257)")
    p.add_argument("--v", default=None, help="volume parameter (comma list for the large sweep)")
    p.add_argument("--eps", default=None, help="comma-separated eps values")
    p.add_argument("--K", type=int, default=16, help="number of cosine modes")
    p.add_argument("--tol", type=float, default=1e-10, help="linear solver tolerance")
    p.add_argument("--functional", default=None, help="E, E_v, E_eps or E0")
    p.add_argument("--sweep", default=None, help=f"asymptotics sweep: {', '.join(SWEEPS)}")
    p.add_argument("--optimize", action="store_true", help="also optimize in the small sweep")
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="tactoid_out", help="output directory (TACTOID_OUT overrides)")
    p.add_argument("--plots", action="store_true", help="write SVG plots")
    p.add_argument("--serial", action="store_true", help="single worker, deterministic order")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: cores)")
    p.add_argument("--divergence-as-error", action="store_true",
                   help="exit with status 3 when a divergence flag is raised")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    default_grid = {"baseline": (1025, 257), "optimize": (257, 65)}.get(args.command, (513, 129))
    workers = 1 if args.serial else (args.workers or os.cpu_count() or 1)
    return RunConfig(
        command=args.command, curve=args.curve, builtin=args.builtin,
        grid=_parse_grid(args.grid) if args.grid else default_grid,
        tol=args.tol, v=_parse_list(args.v), eps=_parse_list(args.eps), K=args.K,
        functional=args.functional, sweep=args.sweep, out=args.out, plots=args.plots,
        serial=args.serial, workers=workers, seed=args.seed, max_iter=args.max_iter,
        divergence_as_error=args.divergence_as_error, optimize=args.optimize,
    ).validate()


def _error(kind: str, name: str, message: str) -> None:
    print(json.dumps({"error": kind, "kind": name, "message": message}, sort_keys=True),
          file=sys.stderr)


def run(cfg: RunConfig) -> int:
    out = Outputs(cfg)
    try:
        return PIPELINES[cfg.command](cfg, out)
    except SolverFailure as exc:
        _error("solver", type(exc).__name__, str(exc).replace("\n", " "))
        return EXIT_SOLVER
    except (TactoidError, ValueError) as exc:
        _error("validation", type(exc).__name__, str(exc).replace("\n", " "))
        return EXIT_INVALID


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = config_from_args(args)
    except (TactoidError, ValueError) as exc:
        _error("validation", type(exc).__name__, str(exc))
        return EXIT_INVALID
    return run(cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
