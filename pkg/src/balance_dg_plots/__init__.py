"""Figure scripts for the solver CLI's CSV artifacts.

This package talks to the solver exclusively through its CSV files --
``solution.csv``, ``entropy.csv``, ``convergence.csv`` -- and renders the
standard figure families: log-log convergence plots with reference slopes,
perturbation profiles as per-element polynomial polylines, entropy-drift
time series, and 2D contour snapshots.  It never imports the solver
package, so the solver remains fully usable without matplotlib.

Entry points (installed as console scripts, one per figure kind)::

    balance-dg-plot-convergence  convergence.csv [...] -o FIG
    balance-dg-plot-profile      baseline.csv solution.csv [...] -o FIG
    balance-dg-plot-entropy      entropy.csv [...] -o FIG
    balance-dg-plot-contour      solution.csv -o FIG [--field zeta]

Programmatic use goes through :class:`FigureSpec` and :func:`render`.
"""

from .figures import FigureSpec, default_reference_slopes, render
from .loader import (
    ConvergenceTable,
    EntropyTable,
    PlotDataError,
    SolutionTable,
    read_convergence_csv,
    read_entropy_csv,
    read_solution_csv,
)

__all__ = [
    "FigureSpec",
    "render",
    "default_reference_slopes",
    "PlotDataError",
    "SolutionTable",
    "EntropyTable",
    "ConvergenceTable",
    "read_solution_csv",
    "read_entropy_csv",
    "read_convergence_csv",
]
