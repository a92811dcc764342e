"""Well-balanced Gauss-Lobatto DG solver for the rotating shallow water equations.

Subpackage map:

* ``quadrature``  -- Gauss-Lobatto collocation operators (D, I, B, weights)
* ``physics``     -- fluxes, sources, entropy pairs and entropy Hessians
* ``equilibria``  -- analytic steady families and discrete steady-state solves
* ``solver_core`` -- 1D DG solver (global-flux quadrature, entropy correction)
* ``solver_2d``   -- tensor-product 2D extension
* ``harness``     -- experiment catalog, error norms, convergence/perturbation studies
* ``cli``         -- ``balance-dg`` command-line front end (CSV outputs)
"""

from .quadrature import GLBasis, build_basis

__all__ = ["GLBasis", "build_basis"]

__version__ = "0.1.0"
