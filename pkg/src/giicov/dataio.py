"""Panel CSV files: ``unit,time,y[,x1,...]`` plus a JSON sidecar with provenance."""

from __future__ import annotations

import csv
import json

import numpy as np

from .errors import DataError
from .models.base import PanelData


def sidecar_path(path):
    return str(path) + ".meta.json"


def write_panel_csv(data, path, meta=None):
    """Write ``data`` in long format, one row per (unit, time)."""
    dx = data.d_x
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["unit", "time", "y"] + [f"x{k + 1}" for k in range(dx)])
        for i in range(data.n):
            for j, t in enumerate(data.times):
                row = [i + 1, t, repr(float(data.y[i, j]))]
                if dx:
                    row += [repr(float(v)) for v in data.x[i, j]]
                w.writerow(row)
    if meta is not None:
        with open(sidecar_path(path), "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
    return path


def read_panel_csv(path, needs_x=None, times=None):
    """Parse a long-format panel CSV into :class:`PanelData`.

    Parameters
    ----------
    path : str
    needs_x : bool, optional
        Require (True) or forbid (False) regressor columns.
    times : tuple of int, optional
        Periods the model expects; checked against the file.

    Raises
    ------
    DataError
        With the offending line number for malformed rows, or a description
        of the mismatch for unbalanced panels.
    """
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if header[:3] != ["unit", "time", "y"]:
            raise DataError(f"{path}, line 1: header must start with unit,time,y; got {header[:3]}")
        xcols = header[3:]
        if xcols != [f"x{k + 1}" for k in range(len(xcols))]:
            raise DataError(f"{path}, line 1: regressor columns must be x1, x2, ...; got {xcols}")
        if needs_x is True and not xcols:
            raise DataError(f"{path}: this model needs regressor columns x1, ...")
        if needs_x is False and xcols:
            raise DataError(f"{path}: this model takes no regressors, found {xcols}")
        cells = {}
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}, line {line}: expected {len(header)} fields, got {len(row)}")
            try:
                unit, t = int(row[0]), int(row[1])
                vals = [float(c) for c in row[2:]]
            except ValueError as exc:
                raise DataError(f"{path}, line {line}: {exc}") from None
            if not all(np.isfinite(vals)):
                raise DataError(f"{path}, line {line}: non-finite value")
            if (unit, t) in cells:
                raise DataError(f"{path}, line {line}: duplicate (unit, time) = ({unit}, {t})")
            cells[(unit, t)] = vals
    if not cells:
        raise DataError(f"{path}: no data rows")
    units = sorted({u for u, _ in cells})
    periods = tuple(sorted({t for _, t in cells}))
    if len(cells) != len(units) * len(periods):
        raise DataError(f"{path}: unbalanced panel ({len(cells)} rows for {len(units)} units "
                        f"x {len(periods)} periods)")
    if times is not None and periods != tuple(times):
        raise DataError(f"{path}: periods {list(periods)} do not match the model's {list(times)}")
    arr = np.array([[cells[(u, t)] for t in periods] for u in units])
    y = arr[:, :, 0]
    x = arr[:, :, 1:] if xcols else None
    return PanelData(y, x, periods)


def read_sidecar(path):
    try:
        with open(sidecar_path(path)) as fh:
            return json.load(fh)
    except FileNotFoundError:
        return None
