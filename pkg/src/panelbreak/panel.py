"""Core panel data types and the break-interacted regressor transform.

Conventions used throughout the package:

* Time periods are re-indexed internally to 1..T in the sorted order of
  their labels; all reported dates map back to labels.
* A break date ``b`` is the LAST period of the pre-break regime, so the
  post-break indicator is one for periods t > b.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .exceptions import (
    DuplicateObservation,
    InputError,
    NonFiniteValue,
    RaggedRow,
    UnbalancedPanel,
)


@dataclass(frozen=True)
class PanelData:
    """A balanced N x T panel with k regressors per observation.

    Attributes
    ----------
    y : ndarray, shape (N, T)
        Outcome variable.
    x : ndarray, shape (N, T, k)
        Regressors.
    d : ndarray, shape (T, n) or None
        Known common regressors (may include an intercept column).
    unit_labels, time_labels : tuple
        Identifiers, in the internal ordering. Time labels are strictly
        increasing under their declared total order.
    """

    y: np.ndarray
    x: np.ndarray
    d: np.ndarray | None = None
    unit_labels: tuple = ()
    time_labels: tuple = ()

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        x = np.asarray(self.x, dtype=float)
        if y.ndim != 2:
            raise InputError("y must be an N x T matrix")
        if x.ndim != 3:
            raise InputError("x must be an N x T x k tensor")
        n_units, n_periods = y.shape
        if x.shape[:2] != (n_units, n_periods):
            raise InputError(
                f"x has leading shape {x.shape[:2]}, expected {(n_units, n_periods)}"
            )
        if n_units < 2 or n_periods < 2 or x.shape[2] < 1:
            raise InputError("need N >= 2, T >= 2 and k >= 1")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(x)):
            raise NonFiniteValue("panel contains non-finite values")
        d = self.d
        if d is not None:
            d = np.asarray(d, dtype=float)
            if d.ndim != 2 or d.shape[0] != n_periods:
                raise InputError("d must be a T x n matrix")
            if not np.all(np.isfinite(d)):
                raise NonFiniteValue("common regressors contain non-finite values")
            if d.shape[1] == 0:
                d = None
        unit_labels = tuple(self.unit_labels) or tuple(range(1, n_units + 1))
        time_labels = tuple(self.time_labels) or tuple(range(1, n_periods + 1))
        if len(unit_labels) != n_units or len(time_labels) != n_periods:
            raise InputError("label lengths do not match panel dimensions")
        for arr in (y, x) + ((d,) if d is not None else ()):
            arr.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "unit_labels", unit_labels)
        object.__setattr__(self, "time_labels", time_labels)

    @property
    def n_units(self) -> int:
        return self.y.shape[0]

    @property
    def n_periods(self) -> int:
        return self.y.shape[1]

    @property
    def n_regressors(self) -> int:
        return self.x.shape[2]

    @property
    def n_common(self) -> int:
        return 0 if self.d is None else self.d.shape[1]

    def slice_periods(self, start: int, stop: int) -> "PanelData":
        """Sub-panel covering periods ``start``..``stop`` (1-based, inclusive)."""
        if not (1 <= start <= stop <= self.n_periods):
            raise InputError(f"invalid period window [{start}, {stop}]")
        sl = slice(start - 1, stop)
        return PanelData(
            y=self.y[:, sl].copy(),
            x=self.x[:, sl, :].copy(),
            d=None if self.d is None else self.d[sl, :].copy(),
            unit_labels=self.unit_labels,
            time_labels=self.time_labels[start - 1 : stop],
        )


class CandidateSetMode(Enum):
    """Which candidate break set a BreakSpec describes.

    FULL_RANGE is the estimation set [r, T-r-1]; TRIMMED is the testing
    set of dates whose fraction b/T lies in [eps, 1-eps].
    """

    FULL_RANGE = "full_range"
    TRIMMED = "trimmed"


@dataclass(frozen=True)
class BreakSpec:
    """Which coefficients may break, and over which candidate dates.

    ``selection`` is the k x r 0/1 matrix with one unit column per
    breaking coefficient. ``trim_fraction`` only matters in TRIMMED mode.
    """

    selection: np.ndarray
    trim_fraction: float = 0.15
    candidate_set_mode: CandidateSetMode = CandidateSetMode.FULL_RANGE

    def __post_init__(self):
        sel = np.asarray(self.selection, dtype=float)
        if sel.ndim != 2 or sel.shape[1] < 1:
            raise InputError("selection must be a k x r matrix with r >= 1")
        k, r = sel.shape
        if r > k:
            raise InputError("cannot have more breaking coefficients than regressors")
        ok = np.all((sel == 0.0) | (sel == 1.0)) and np.all(sel.sum(axis=0) == 1.0)
        if not ok:
            raise InputError("selection columns must be unit basis vectors")
        rows = np.argmax(sel, axis=0)
        if len(set(rows.tolist())) != r:
            raise InputError("selection columns must be distinct (full column rank)")
        if not (0.0 < self.trim_fraction < 0.5):
            raise InputError("trim_fraction must lie in (0, 0.5)")
        sel.setflags(write=False)
        object.__setattr__(self, "selection", sel)

    @classmethod
    def from_indices(cls, k: int, breaking: "list[int]", **kwargs) -> "BreakSpec":
        """Spec selecting 0-based regressor coordinates ``breaking``."""
        sel = np.zeros((k, len(breaking)))
        for j, idx in enumerate(breaking):
            sel[idx, j] = 1.0
        return cls(selection=sel, **kwargs)

    @property
    def n_breaking(self) -> int:
        return self.selection.shape[1]

    @property
    def breaking_indices(self) -> "list[int]":
        return [int(i) for i in np.argmax(self.selection, axis=0)]


@dataclass(frozen=True)
class RegimePartition:
    """Split of 1..T into pre (t <= b) and post (t > b) regimes."""

    break_date: int
    n_periods: int

    def __post_init__(self):
        if not (1 <= self.break_date <= self.n_periods - 1):
            raise InputError("break date must lie in [1, T-1]")

    @property
    def pre_indices(self) -> range:
        return range(1, self.break_date + 1)

    @property
    def post_indices(self) -> range:
        return range(self.break_date + 1, self.n_periods + 1)


def _coerce_time_order(labels):
    """Sort time labels numerically when possible, else lexicographically.

    The theory needs a total order on periods; callers with exotic label
    types should pre-map them to sortable values.
    """
    try:
        keyed = sorted(labels, key=float)
        return keyed
    except (TypeError, ValueError):
        return sorted(labels, key=str)


def build_panel(raw_rows, common_rows=None, intercept: bool = False) -> PanelData:
    """Assemble a PanelData from long-format rows.

    Parameters
    ----------
    raw_rows : iterable of (unit, time, y, x_1, ..., x_k)
        Every (unit, time) pair must appear exactly once and every unit
        must be observed at every time.
    common_rows : iterable of (time, d_1, ..., d_n), optional
        Known common regressors; must cover every time exactly once.
    intercept : bool
        Prepend an all-ones column to d (fixed effects through the
        known-factor channel).
    """
    rows = [tuple(row) for row in raw_rows]
    if not rows:
        raise InputError("no observations supplied")
    width = len(rows[0])
    if width < 4:
        raise RaggedRow("rows need at least (unit, time, y, x1)")
    cells: dict = {}
    units_seen, times_seen = [], []
    for row in rows:
        if len(row) != width:
            raise RaggedRow(f"row {row[:2]} has {len(row)} fields, expected {width}")
        unit, time = row[0], row[1]
        if (unit, time) in cells:
            raise DuplicateObservation(f"duplicate observation for {(unit, time)}")
        vals = np.asarray(row[2:], dtype=float)
        if not np.all(np.isfinite(vals)):
            raise NonFiniteValue(f"non-finite value at {(unit, time)}")
        cells[(unit, time)] = vals
        if unit not in units_seen:
            units_seen.append(unit)
        if time not in times_seen:
            times_seen.append(time)
    units = sorted(units_seen, key=lambda u: (str(type(u)), str(u)))
    times = _coerce_time_order(times_seen)
    k = width - 3
    n_units, n_periods = len(units), len(times)
    y = np.empty((n_units, n_periods))
    x = np.empty((n_units, n_periods, k))
    for i, unit in enumerate(units):
        for t, time in enumerate(times):
            vals = cells.get((unit, time))
            if vals is None:
                raise UnbalancedPanel(f"missing observation for {(unit, time)}")
            y[i, t] = vals[0]
            x[i, t, :] = vals[1:]
    d = None
    if common_rows is not None:
        common = {}
        cwidth = None
        for row in common_rows:
            row = tuple(row)
            if cwidth is None:
                cwidth = len(row)
            elif len(row) != cwidth:
                raise RaggedRow("common-regressor rows have inconsistent width")
            time = row[0]
            if time in common:
                raise DuplicateObservation(f"duplicate common row for time {time}")
            vals = np.asarray(row[1:], dtype=float)
            if not np.all(np.isfinite(vals)):
                raise NonFiniteValue(f"non-finite common regressor at time {time}")
            common[time] = vals
        missing = [t for t in times if t not in common]
        if missing:
            raise UnbalancedPanel(f"common rows missing times {missing[:5]}")
        extra = [t for t in common if t not in set(times)]
        if extra:
            raise UnbalancedPanel(f"common rows cover unknown times {extra[:5]}")
        d = np.vstack([common[t] for t in times]) if cwidth > 1 else None
    if intercept:
        ones = np.ones((n_periods, 1))
        d = ones if d is None else np.hstack([ones, d])
    return PanelData(y=y, x=x, d=d, unit_labels=tuple(units), time_labels=tuple(times))


def post_break_mask(n_periods: int, b: int) -> np.ndarray:
    """Boolean length-T mask of periods t with t > b (1-based t)."""
    return np.arange(1, n_periods + 1) > b


def z_regressors(panel: PanelData, spec: BreakSpec, b: int) -> np.ndarray:
    """Break-interacted regressors z_{i,t}(b) = R'x_{i,t} * 1(t > b).

    ``b`` may be 0 (every period post-break) up to T-1 (only the last
    period post-break). Returns an N x T x r tensor.
    """
    T = panel.n_periods
    if not (0 <= b <= T - 1):
        raise InputError(f"break date {b} outside [0, {T - 1}]")
    z = panel.x @ spec.selection
    z[:, ~post_break_mask(T, b), :] = 0.0
    return z


def estimation_candidates(spec: BreakSpec, n_periods: int) -> "list[int]":
    """The estimation candidate set B = [r, T-r-1]."""
    r = spec.n_breaking
    return [b for b in range(r, n_periods - r) if 1 <= b <= n_periods - 1]


def testing_candidates(spec: BreakSpec, n_periods: int) -> "list[int]":
    """The trimmed testing candidate set B'.

    Integer dates b with floor(eps*T) <= b <= floor((1-eps)*T),
    intersected with the estimation set when both constraints bind.
    """
    eps = spec.trim_fraction
    lo = int(np.floor(eps * n_periods))
    hi = int(np.floor((1.0 - eps) * n_periods))
    full = set(estimation_candidates(spec, n_periods))
    return [b for b in range(lo, hi + 1) if b in full]
