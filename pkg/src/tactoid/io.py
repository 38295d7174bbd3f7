"""Reading and writing curves, reports and plots.

Curve files are CSV with a header ``x,y``, one sample per row, ascending
``x``.  Spectral curves are JSON records ``{"a": ..., "coefficients": [...]}``.
Reports are JSON with sorted keys and fixed float formatting so identical
inputs give byte-identical files; anything time- or host-dependent goes to a
separate ``.meta.json`` sidecar.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .errors import MalformedCurveError
from .geometry import GraphCurve


# -- curves -------------------------------------------------------------------------

def read_curve_csv(path) -> GraphCurve:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip().lower() for h in next(reader)]
            if header != ["x", "y"]:
                raise MalformedCurveError(f"{path}: header must be 'x,y', got {','.join(header)}")
            rows = [r for r in reader if r and any(c.strip() for c in r)]
    except StopIteration:
        raise MalformedCurveError(f"{path}: empty file") from None
    except OSError as exc:
        raise MalformedCurveError(f"{path}: {exc.strerror}") from None
    try:
        data = np.array([[float(a), float(b)] for a, b in rows], dtype=float)
    except ValueError as exc:
        raise MalformedCurveError(f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[0] < 3:
        raise MalformedCurveError(f"{path}: need at least 3 samples")
    return GraphCurve.from_samples(data[:, 0], data[:, 1], name=path.stem)


def write_curve_csv(curve: GraphCurve, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write("x,y\n")
        for x, y in zip(curve.x, curve.f):
            fh.write(f"{x:.17g},{y:.17g}\n")
    return path


def read_spectral(path, n: int = 1025) -> GraphCurve:
    path = Path(path)
    try:
        rec = json.loads(path.read_text())
        a = float(rec["a"])
        coefficients = [float(c) for c in rec["coefficients"]]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise MalformedCurveError(f"{path}: not a spectral record ({exc})") from None
    if not coefficients or not a > 0:
        raise MalformedCurveError(f"{path}: need a > 0 and at least one coefficient")
    return GraphCurve.from_spectral(coefficients, a, n, name=path.stem)


def write_spectral(coefficients: Sequence[float], a: float, path) -> Path:
    return write_json({"a": float(a), "coefficients": [float(c) for c in coefficients]}, path)


def read_curve(path, n: int = 1025) -> GraphCurve:
    """CSV or spectral JSON, chosen by extension."""
    return read_spectral(path, n) if Path(path).suffix.lower() == ".json" else read_curve_csv(path)


# -- reports ------------------------------------------------------------------------

def to_jsonable(obj: Any) -> Any:
    """Plain JSON types; non-finite floats become the strings "inf", "-inf", "nan"."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        obj = obj.to_dict() if hasattr(obj, "to_dict") else dataclasses.asdict(obj)
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, Path):
        return str(obj)
    return repr(obj)


def dumps(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n"


def write_json(obj: Any, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def write_metadata(path, extra: Optional[dict] = None) -> Path:
    """Sidecar ``<name>.meta.json`` with the run time and environment."""
    import scipy

    path = Path(path)
    meta = {
        "written_at": datetime.now(timezone.utc).isoformat(),
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
    }
    if extra:
        meta.update(extra)
    side = path.with_name(path.name.rsplit(".", 1)[0] + ".meta.json")
    return write_json(meta, side)


def write_table_csv(header: Sequence[str], rows: Iterable[Sequence[float]], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(f"{float(v):.17g}" for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


# -- plots --------------------------------------------------------------------------

def write_svg_plot(path, series: dict, title: str = "", xlabel: str = "", ylabel: str = "",
                   loglog: bool = False, annotation: Optional[str] = None,
                   equal_aspect: bool = False) -> Path:
    """Line plot of ``{label: (x, y)}`` as SVG (matplotlib, deterministic output)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context({"svg.hashsalt": "tactoid", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, (x, y) in series.items():
            ax.plot(x, y, marker="o" if loglog else None, ms=3, label=label)
        if loglog:
            ax.set_xscale("log")
            ax.set_yscale("log")
        if equal_aspect:
            ax.set_aspect("equal")
        ax.set_title(title)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if annotation:
            ax.text(0.02, 0.02, annotation, transform=ax.transAxes, fontsize=8)
        if len(series) > 1:
            ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
