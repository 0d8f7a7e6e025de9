"""CSV ingestion and emission for long-format panels.

Long format: header ``unit,time,y,<x-names...>`` with one row per
(unit, time); optional second file ``time,<d-names...>`` for known
common regressors. UTF-8, '.' decimal separator, IEEE doubles.
"""

from __future__ import annotations

import csv

from .exceptions import InputError, RaggedRow
from .panel import PanelData, build_panel


def _parse_time(token: str):
    try:
        value = float(token)
        return int(value) if value.is_integer() else value
    except ValueError:
        return token


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        rows = list(reader)
    return [h.strip() for h in header], rows


def _column_indices(header, names, path):
    indices = []
    for name in names:
        if name not in header:
            raise InputError(f"{path}: column {name!r} not found in {header}")
        indices.append(header.index(name))
    return indices


def read_panel_rows(path, y: str, x_names, unit: str = "unit", time: str = "time"):
    """Read long-format observation rows (unit, time, y, x...)."""
    header, rows = _read_rows(path)
    idx = _column_indices(header, [unit, time, y, *x_names], path)
    parsed = []
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        if max(idx) >= len(row):
            raise RaggedRow(f"{path}:{lineno}: row has {len(row)} fields")
        try:
            values = [float(row[i]) for i in idx[2:]]
        except ValueError as err:
            raise InputError(f"{path}:{lineno}: {err}") from None
        parsed.append((row[idx[0]], _parse_time(row[idx[1]]), *values))
    return parsed


def read_common_rows(path, d_names=None, time: str = "time"):
    """Read common-regressor rows (time, d...); all non-time columns by default."""
    header, rows = _read_rows(path)
    if d_names is None:
        d_names = [h for h in header if h != time]
    idx = _column_indices(header, [time, *d_names], path)
    parsed = []
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        if max(idx) >= len(row):
            raise RaggedRow(f"{path}:{lineno}: row has {len(row)} fields")
        try:
            values = [float(row[i]) for i in idx[1:]]
        except ValueError as err:
            raise InputError(f"{path}:{lineno}: {err}") from None
        parsed.append((_parse_time(row[idx[0]]), *values))
    return parsed


def write_panel_csv(panel: PanelData, path, y: str = "y", x_names=None) -> None:
    """Emit a panel back to long-format CSV at full round-trip precision."""
    k = panel.n_regressors
    x_names = list(x_names) if x_names is not None else [f"x{j + 1}" for j in range(k)]
    if len(x_names) != k:
        raise InputError(f"need {k} regressor names, got {len(x_names)}")
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["unit", "time", y, *x_names])
        for i, unit in enumerate(panel.unit_labels):
            for t, time in enumerate(panel.time_labels):
                writer.writerow(
                    [unit, time, repr(float(panel.y[i, t])), *(repr(float(v)) for v in panel.x[i, t])]
                )


def load_panel(
    panel_path,
    y: str,
    x_names,
    common_path=None,
    d_names=None,
    intercept: bool = True,
) -> PanelData:
    raw = read_panel_rows(panel_path, y, x_names)
    common = read_common_rows(common_path, d_names) if common_path else None
    return build_panel(raw, common_rows=common, intercept=intercept)


def read_keyvalue_config(path) -> dict:
    """Plain-text key = value configuration, '#' starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputError(f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            out[key] = value
    return out
