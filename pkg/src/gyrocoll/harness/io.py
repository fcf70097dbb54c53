"""CSV reports and binary checkpoints.

CSV headers carry units in parentheses, e.g. ``t (time)``.  Floats are
written with 17 significant digits so that re-reading reproduces them
exactly.  Files are written to a temporary name and renamed, so a failed run
leaves no partial output.
"""

from __future__ import annotations

import csv
import os
import sys
from pathlib import Path

import numpy as np

UNITS = {
    "t": "time", "mass": "density*area", "j1": "density*velocity*area", "j2": "density*velocity*area",
    "entropy": "density*area", "norm_F": "sqrt(density*area)",
    "eps": "1", "error_first": "sqrt(density*area)", "error_second": "sqrt(density*area)",
    "measured": "1", "tolerance": "1", "pass": "bool",
    "dt_stable": "time", "dt": "time", "steps": "1", "time_per_step": "s", "wall": "s", "speedup": "1",
}


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def header_name(col: str) -> str:
    return f"{col} ({UNITS[col]})" if col in UNITS else col


def strip_unit(h: str) -> str:
    return h.split(" (", 1)[0]


def _atomic_write(path: Path, write) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "w", newline="") as fh:
            write(fh)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def write_csv(path: str | Path, columns: list[str], rows: list) -> Path:
    path = Path(path)

    def _w(fh):
        w = csv.writer(fh)
        w.writerow([header_name(c) for c in columns])
        for row in rows:
            w.writerow([fmt(x) for x in row])

    _atomic_write(path, _w)
    return path


def _parse(cell: str):
    try:
        if cell.lstrip("-").isdigit():
            return int(cell)
        return float(cell)
    except ValueError:
        return cell


def read_csv(path: str | Path) -> dict[str, list]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = [strip_unit(h) for h in next(r)]
        cols: dict[str, list] = {h: [] for h in header}
        for row in r:
            for h, cell in zip(header, row):
                cols[h].append(_parse(cell))
    return cols


def write_trace(path, report) -> Path:
    return write_csv(path, list(report.COLUMNS), report.rows())


# ---- checkpoints ----------------------------------------------------------------
def write_checkpoint(path: str | Path, f: np.ndarray, meta: dict) -> tuple[Path, Path]:
    """Raw little-endian float64 dump plus a ``key = value`` sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.ascontiguousarray(f, dtype="<f8")
    side = path.with_suffix(path.suffix + ".txt")
    info = {"shape": ",".join(str(n) for n in data.shape), "dtype": "float64",
            "endianness": "little", "host_byteorder": sys.byteorder}
    info.update({k: fmt(v) if not isinstance(v, (tuple, list)) else ",".join(fmt(x) for x in v)
                 for k, v in meta.items()})
    tmp = path.with_name(path.name + ".tmp")
    data.tofile(tmp)
    os.replace(tmp, path)
    _atomic_write(side, lambda fh: fh.write("".join(f"{k} = {v}\n" for k, v in info.items())))
    return path, side


def read_checkpoint(path: str | Path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    side = path.with_suffix(path.suffix + ".txt")
    meta = {}
    for line in side.read_text().splitlines():
        if "=" in line:
            k, v = (s.strip() for s in line.split("=", 1))
            meta[k] = v
    if meta.get("dtype") != "float64":
        raise ValueError(f"unsupported checkpoint dtype {meta.get('dtype')!r}")
    order = {"little": "<", "big": ">"}.get(meta.get("endianness", ""))
    if order is None:
        raise ValueError("checkpoint sidecar lacks a valid endianness marker")
    shape = tuple(int(s) for s in meta["shape"].split(","))
    data = np.fromfile(path, dtype=order + "f8")
    if data.size != int(np.prod(shape)):
        raise ValueError(f"checkpoint size {data.size} does not match shape {shape}")
    return data.reshape(shape).astype(float), meta
