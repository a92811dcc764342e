"""Readers for the solver CLI's CSV schemas.

Each reader validates its file's header against the expected schema before
touching any data and raises :class:`PlotDataError` naming the file and the
offending column; a file with a valid header but zero data rows is an
explicit "no data" error, never an empty plot.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

__all__ = [
    "PlotDataError",
    "SolutionTable",
    "EntropyTable",
    "ConvergenceTable",
    "read_solution_csv",
    "read_entropy_csv",
    "read_convergence_csv",
]

SOLUTION_COLUMNS_1D = ("element", "node", "x", "h", "hu", "hv", "b")
SOLUTION_COLUMNS_2D = ("element", "node", "x", "y", "h", "hu", "hv", "b")
ENTROPY_COLUMNS = ("t", "total_entropy", "n_tot")
CONVERGENCE_COLUMNS = ("p", "N", "err_all_h", "err_end_h", "err_all_hu",
                       "err_end_hu", "err_all_hv", "err_end_hv",
                       "slope_all", "slope_end")


class PlotDataError(Exception):
    """Input CSV is unreadable, off-schema, or carries no data."""


def _read_rows(path: str, expected: Sequence[str]) -> list:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise PlotDataError(f"{path}: cannot read file ({exc})") from None
    if not rows:
        raise PlotDataError(f"{path}: no data (file is empty)")
    header = rows[0]
    for name in expected:
        if name not in header:
            raise PlotDataError(f"{path}: missing column '{name}'")
    for name in header:
        if name not in expected:
            raise PlotDataError(f"{path}: unexpected column '{name}'")
    if list(header) != list(expected):
        raise PlotDataError(f"{path}: column order must be "
                            f"{','.join(expected)}")
    if len(rows) == 1:
        raise PlotDataError(f"{path}: no data (header only)")
    return rows[1:]


def _columns(path: str, rows: list, names: Sequence[str],
             int_names: Sequence[str] = ()) -> Dict[str, np.ndarray]:
    cols: Dict[str, list] = {name: [] for name in names}
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(names):
            raise PlotDataError(f"{path}: line {lineno}: expected "
                                f"{len(names)} fields, got {len(row)}")
        for name, value in zip(names, row):
            try:
                cols[name].append(float(value))
            except ValueError:
                raise PlotDataError(f"{path}: line {lineno}: column "
                                    f"'{name}': not a number: "
                                    f"{value!r}") from None
    out = {}
    for name in names:
        arr = np.asarray(cols[name])
        out[name] = arr.astype(int) if name in int_names else arr
    return out


@dataclass(frozen=True)
class SolutionTable:
    """One solution.csv:  nodal states plus the element/node structure."""

    path: str
    element: np.ndarray
    node: np.ndarray
    x: np.ndarray
    y: Optional[np.ndarray]   # None for 1D files
    h: np.ndarray
    hu: np.ndarray
    hv: np.ndarray
    b: np.ndarray

    @property
    def is_2d(self) -> bool:
        return self.y is not None

    @property
    def n_elements(self) -> int:
        return int(self.element.max()) + 1

    @property
    def nodes_per_element(self) -> int:
        return int(self.node.max()) + 1


@dataclass(frozen=True)
class EntropyTable:
    path: str
    t: np.ndarray
    total_entropy: np.ndarray
    n_tot: np.ndarray


@dataclass(frozen=True)
class ConvergenceTable:
    path: str
    p: np.ndarray
    n: np.ndarray
    err_all_h: np.ndarray
    err_end_h: np.ndarray
    slope_all: np.ndarray
    slope_end: np.ndarray


def read_solution_csv(path: str) -> SolutionTable:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            first = fh.readline()
    except OSError as exc:
        raise PlotDataError(f"{path}: cannot read file ({exc})") from None
    names = SOLUTION_COLUMNS_2D if "y" in first.strip().split(",") \
        else SOLUTION_COLUMNS_1D
    rows = _read_rows(path, names)
    cols = _columns(path, rows, names, int_names=("element", "node"))
    return SolutionTable(path=path, element=cols["element"],
                         node=cols["node"], x=cols["x"], y=cols.get("y"),
                         h=cols["h"], hu=cols["hu"], hv=cols["hv"],
                         b=cols["b"])


def read_entropy_csv(path: str) -> EntropyTable:
    rows = _read_rows(path, ENTROPY_COLUMNS)
    cols = _columns(path, rows, ENTROPY_COLUMNS)
    return EntropyTable(path=path, t=cols["t"],
                        total_entropy=cols["total_entropy"],
                        n_tot=cols["n_tot"])


def read_convergence_csv(path: str) -> ConvergenceTable:
    rows = _read_rows(path, CONVERGENCE_COLUMNS)
    cols = _columns(path, rows, CONVERGENCE_COLUMNS, int_names=("p", "N"))
    return ConvergenceTable(path=path, p=cols["p"], n=cols["N"],
                            err_all_h=cols["err_all_h"],
                            err_end_h=cols["err_end_h"],
                            slope_all=cols["slope_all"],
                            slope_end=cols["slope_end"])
