"""Figure rendering over the loaded CSV tables.

Pure file-to-file transformations: apart from placing reference-slope
guide lines and sampling the per-element nodal polynomials for display,
nothing is computed that is not already in the files.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .loader import (
    PlotDataError,
    read_convergence_csv,
    read_entropy_csv,
    read_solution_csv,
)

__all__ = [
    "FigureSpec",
    "render",
    "default_reference_slopes",
    "sample_element_polynomial",
]

KINDS = ("convergence", "profile", "entropy", "contour")

#: display samples per element for profile polylines
SAMPLES_PER_ELEMENT = 10

CONTOUR_FIELDS = ("zeta", "h", "hu", "hv", "b")


@dataclass(frozen=True)
class FigureSpec:
    """What to draw: input CSVs, figure kind, axes cosmetics, output path."""

    kind: str
    csv_paths: Tuple[str, ...]
    output: str
    labels: Optional[Tuple[str, ...]] = None
    title: Optional[str] = None
    xlabel: Optional[str] = None
    ylabel: Optional[str] = None
    xlim: Optional[Tuple[float, float]] = None
    ylim: Optional[Tuple[float, float]] = None
    #: convergence only; None draws (p+2, 2p) per degree present
    reference_slopes: Optional[Tuple[float, ...]] = None
    #: contour only
    field: str = "zeta"

    def label_for(self, index: int) -> str:
        if self.labels is not None and index < len(self.labels):
            return self.labels[index]
        stem = os.path.splitext(os.path.basename(self.csv_paths[index]))[0]
        parent = os.path.basename(os.path.dirname(self.csv_paths[index]))
        return f"{parent}/{stem}" if parent else stem


def default_reference_slopes(p: int) -> Tuple[float, float]:
    """Guide-line orders drawn against degree-p data: volume superconvergence
    p+2 and one-sided superconvergence 2p."""
    return (float(p + 2), float(2 * p))


def sample_element_polynomial(x_nodes: np.ndarray, values: np.ndarray,
                              n_samples: int = SAMPLES_PER_ELEMENT
                              ) -> Tuple[np.ndarray, np.ndarray]:
    """Evaluate the nodal Lagrange interpolant at uniform display points.

    ``x_nodes``/``values`` are one element's coordinates and nodal values;
    the barycentric form keeps this stable for clustered node sets.
    """
    x_nodes = np.asarray(x_nodes, dtype=float)
    values = np.asarray(values, dtype=float)
    xs = np.linspace(x_nodes[0], x_nodes[-1], n_samples)
    diffs = x_nodes[:, None] - x_nodes[None, :]
    np.fill_diagonal(diffs, 1.0)
    weights = 1.0 / diffs.prod(axis=1)
    dist = xs[:, None] - x_nodes[None, :]
    exact = np.isclose(dist, 0.0, atol=1e-14 * max(1.0, abs(x_nodes[-1])))
    dist[exact] = 1.0
    terms = weights[None, :] / dist
    ys = (terms @ values) / terms.sum(axis=1)
    hit_rows, hit_cols = np.nonzero(exact)
    ys[hit_rows] = values[hit_cols]
    return xs, ys


def _element_polyline(table, values: np.ndarray
                      ) -> Tuple[np.ndarray, np.ndarray]:
    """Concatenated per-element samples, NaN-separated so interface jumps
    render as gaps rather than spurious vertical lines."""
    n_el = table.n_elements
    n_nd = table.nodes_per_element
    x = table.x.reshape(n_el, n_nd)
    v = values.reshape(n_el, n_nd)
    xs_parts = []
    ys_parts = []
    for e in range(n_el):
        xe, ye = sample_element_polynomial(x[e], v[e])
        xs_parts.append(np.append(xe, np.nan))
        ys_parts.append(np.append(ye, np.nan))
    return np.concatenate(xs_parts), np.concatenate(ys_parts)


def _finish(ax, spec: FigureSpec, default_xlabel: str,
            default_ylabel: str) -> None:
    ax.set_xlabel(spec.xlabel if spec.xlabel is not None else default_xlabel)
    ax.set_ylabel(spec.ylabel if spec.ylabel is not None else default_ylabel)
    if spec.title is not None:
        ax.set_title(spec.title)
    if spec.xlim is not None:
        ax.set_xlim(*spec.xlim)
    if spec.ylim is not None:
        ax.set_ylim(*spec.ylim)


def _render_convergence(ax, spec: FigureSpec) -> None:
    drew = False
    for idx, path in enumerate(spec.csv_paths):
        table = read_convergence_csv(path)
        file_label = spec.label_for(idx)
        for p in dict.fromkeys(table.p.tolist()):
            sel = table.p == p
            inv_n = 1.0 / table.n[sel].astype(float)
            for err, mode, style in ((table.err_all_h[sel], "all", "o-"),
                                     (table.err_end_h[sel], "end", "s--")):
                ok = np.isfinite(err) & (err > 0.0)
                if not ok.any():
                    continue
                ax.loglog(inv_n[ok], err[ok], style,
                          label=f"{file_label} p={p} {mode}-node")
                drew = True
                slopes = spec.reference_slopes \
                    if spec.reference_slopes is not None \
                    else (default_reference_slopes(int(p))
                          [0 if mode == "all" else 1],)
                x_ref = inv_n[ok]
                anchor_x = x_ref.min()
                anchor_y = err[ok][np.argmin(x_ref)]
                for s in slopes:
                    ax.loglog(x_ref, anchor_y * (x_ref / anchor_x) ** s,
                              ":", color="0.5", linewidth=0.9,
                              label=f"slope {s:g}")
    if not drew:
        raise PlotDataError("no finite error data in "
                            + ", ".join(spec.csv_paths))
    ax.legend(fontsize=7)


def _render_profile(ax, spec: FigureSpec) -> None:
    if len(spec.csv_paths) < 2:
        raise PlotDataError("profile needs a baseline.csv followed by at "
                            "least one solution.csv")
    base = read_solution_csv(spec.csv_paths[0])
    if base.is_2d:
        raise PlotDataError(f"{base.path}: profile figures need 1D data "
                            "(no y column)")
    for idx, path in enumerate(spec.csv_paths[1:], start=1):
        sol = read_solution_csv(path)
        if sol.is_2d:
            raise PlotDataError(f"{path}: profile figures need 1D data "
                                "(no y column)")
        if sol.x.shape != base.x.shape or not np.array_equal(sol.x, base.x):
            raise PlotDataError(f"{path}: node coordinates differ from "
                                f"{base.path}")
        xs, ys = _element_polyline(sol, sol.h - base.h)
        ax.plot(xs, ys, linewidth=1.0, label=spec.label_for(idx))
    ax.axhline(0.0, color="0.7", linewidth=0.6)
    ax.legend(fontsize=7)


def _render_entropy(ax, spec: FigureSpec) -> None:
    for idx, path in enumerate(spec.csv_paths):
        table = read_entropy_csv(path)
        drift = table.total_entropy - table.total_entropy[0]
        line, = ax.plot(table.t, drift, label=spec.label_for(idx))
        if not np.array_equal(table.n_tot, table.total_entropy):
            n_drift = table.n_tot - table.n_tot[0]
            ax.plot(table.t, n_drift, "--", color=line.get_color(),
                    linewidth=0.9,
                    label=f"{spec.label_for(idx)} (friction-corrected)")
    ax.legend(fontsize=7)


def _render_contour(fig, ax, spec: FigureSpec) -> None:
    if len(spec.csv_paths) != 1:
        raise PlotDataError("contour takes exactly one solution.csv")
    table = read_solution_csv(spec.csv_paths[0])
    if not table.is_2d:
        raise PlotDataError(f"{table.path}: contour figures need 2D data "
                            "(y column)")
    if spec.field not in CONTOUR_FIELDS:
        raise PlotDataError(f"unknown field {spec.field!r}; choose from "
                            + "|".join(CONTOUR_FIELDS))
    values = table.h + table.b if spec.field == "zeta" \
        else getattr(table, spec.field)
    tri = ax.tricontourf(table.x, table.y, values, levels=40)
    fig.colorbar(tri, ax=ax, label=spec.field)


def render(spec: FigureSpec) -> str:
    """Draw the figure described by ``spec`` and write it to spec.output."""
    if spec.kind not in KINDS:
        raise ValueError(f"unknown figure kind {spec.kind!r}; "
                         f"choose from {'|'.join(KINDS)}")
    if not spec.csv_paths:
        raise PlotDataError("no input CSV paths given")

    import matplotlib
    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.4, 4.2), dpi=150)
    try:
        if spec.kind == "convergence":
            _render_convergence(ax, spec)
            _finish(ax, spec, "1/N", "mean |depth error|")
        elif spec.kind == "profile":
            _render_profile(ax, spec)
            _finish(ax, spec, "x", "h - h baseline")
        elif spec.kind == "entropy":
            _render_entropy(ax, spec)
            _finish(ax, spec, "t", "entropy drift")
        else:
            _render_contour(fig, ax, spec)
            _finish(ax, spec, "x", "y")
        fig.tight_layout()
        out_dir = os.path.dirname(os.path.abspath(spec.output))
        os.makedirs(out_dir, exist_ok=True)
        fig.savefig(spec.output)
    finally:
        plt.close(fig)
    return spec.output
