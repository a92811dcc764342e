"""Gauss-Lobatto collocation operators on the reference element [0, 1].

Everything downstream (1D and 2D solvers, steady-state solves, entropy
correction) is built from the small operator kit assembled here:

* ``nodes``/``weights`` -- Gauss-Lobatto points xi_0=0 < ... < xi_p=1 and the
  quadrature weights normalized so they sum to 1 (reference element length).
* ``diff`` -- nodal differentiation matrix D, D[i, j] = phi_j'(xi_i).
* ``integ`` -- integration matrix I, I[j, k] = int_0^{xi_j} phi_k(s) ds, i.e.
  the collocated antiderivative operator (row j integrates up to node j).
  Its rows coincide with the Butcher tableau of the (p+1)-stage Lobatto IIIA
  Runge-Kutta method, which is what makes the source-primitive construction
  equivalent to a Lobatto IIIA march in the steady problem.
* ``boundary`` -- B = diag(-1, 0, ..., 0, +1), the surface term of the
  summation-by-parts identity  M D + D^T M = B  with M = diag(weights).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["GLBasis", "build_basis", "lagrange_eval_matrix"]

_P_MIN = 1
_P_MAX = 8


@dataclass(frozen=True)
class GLBasis:
    """Collocation operators for polynomial degree ``p`` on [0, 1].

    All arrays are read-only; shapes are ``nodes/weights: (p+1,)`` and
    ``diff/integ/boundary: (p+1, p+1)``.
    """

    p: int
    nodes: np.ndarray
    weights: np.ndarray
    diff: np.ndarray
    integ: np.ndarray
    boundary: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.p + 1


def _legendre_and_derivative(n: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values of P_n and P_n' on [-1, 1] by the three-term recurrence."""
    x = np.asarray(x, dtype=float)
    p_prev = np.ones_like(x)
    if n == 0:
        return p_prev, np.zeros_like(x)
    p_cur = x.copy()
    for k in range(2, n + 1):
        p_prev, p_cur = p_cur, ((2 * k - 1) * x * p_cur - (k - 1) * p_prev) / k
    # derivative from the standard identity (1 - x^2) P_n' = n (P_{n-1} - x P_n)
    with np.errstate(divide="ignore", invalid="ignore"):
        dp = n * (p_prev - x * p_cur) / (1.0 - x * x)
    # endpoints: P_n'(+-1) = (+-1)^{n-1} n(n+1)/2
    endpoint = np.isclose(np.abs(x), 1.0)
    if np.any(endpoint):
        sgn = np.where(x > 0, 1.0, (-1.0) ** (n - 1))
        dp = np.where(endpoint, sgn * n * (n + 1) / 2.0, dp)
    return p_cur, dp


def _lobatto_nodes_and_weights(p: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Lobatto nodes/weights on [-1, 1] for p+1 points.

    Interior nodes are the roots of P_p', found by Newton iteration seeded
    with the Chebyshev-Lobatto points; endpoints are fixed at +-1.
    """
    if p == 1:
        x = np.array([-1.0, 1.0])
    else:
        # Chebyshev-Lobatto seeds for the p-1 interior roots
        x_int = -np.cos(np.pi * np.arange(1, p) / p)
        for _ in range(100):
            pn, dpn = _legendre_and_derivative(p, x_int)
            # P_p'' from the Legendre ODE: (1-x^2) y'' - 2x y' + p(p+1) y = 0
            d2pn = (2.0 * x_int * dpn - p * (p + 1) * pn) / (1.0 - x_int * x_int)
            dx = dpn / d2pn
            x_int = x_int - dx
            if np.max(np.abs(dx)) < 1e-15:
                break
        x = np.concatenate(([-1.0], x_int, [1.0]))
    pn, _ = _legendre_and_derivative(p, x)
    w = 2.0 / (p * (p + 1) * pn * pn)
    return x, w


def _diff_matrix(nodes: np.ndarray) -> np.ndarray:
    """Nodal differentiation matrix via barycentric weights."""
    n = nodes.size
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    bary = 1.0 / diff.prod(axis=1)
    d = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                d[i, j] = (bary[j] / bary[i]) / (nodes[i] - nodes[j])
    # exact-constant rows: D 1 = 0
    np.fill_diagonal(d, 0.0)
    np.fill_diagonal(d, -d.sum(axis=1))
    return d


def lagrange_eval_matrix(nodes: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Matrix E with E[m, k] = phi_k(points[m]) for the Lagrange basis on ``nodes``."""
    nodes = np.asarray(nodes, dtype=float)
    points = np.asarray(points, dtype=float)
    n = nodes.size
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    bary = 1.0 / diff.prod(axis=1)
    e = np.zeros((points.size, n))
    for m, x in enumerate(points.ravel()):
        hit = np.isclose(x, nodes, rtol=0.0, atol=1e-14)
        if hit.any():
            e[m, np.argmax(hit)] = 1.0
            continue
        terms = bary / (x - nodes)
        e[m] = terms / terms.sum()
    return e.reshape(points.shape + (n,))


def _integration_matrix(nodes: np.ndarray) -> np.ndarray:
    """I[j, k] = int_0^{nodes[j]} phi_k, by composite Gauss-Legendre panels.

    One panel per inter-node gap [xi_{m-1}, xi_m]; each panel uses a
    Gauss-Legendre rule exact well beyond degree p, so the entries are exact
    to round-off for the degree-p integrands.
    """
    n = nodes.size
    ng = n + 2  # exact to degree 2*ng - 1 >= p
    gx, gw = np.polynomial.legendre.leggauss(ng)
    integ = np.zeros((n, n))
    for j in range(1, n):
        a, b = nodes[j - 1], nodes[j]
        pts = 0.5 * (b - a) * gx + 0.5 * (a + b)
        wts = 0.5 * (b - a) * gw
        panel = wts @ lagrange_eval_matrix(nodes, pts)
        integ[j] = integ[j - 1] + panel
    return integ


def build_basis(p: int) -> GLBasis:
    """Assemble the degree-``p`` Gauss-Lobatto operator kit on [0, 1].

    Raises ``ValueError`` for p outside [1, 8] (node accuracy and time-step
    restrictions make higher degrees unsupported here).
    """
    if not isinstance(p, (int, np.integer)) or isinstance(p, bool):
        raise ValueError(f"polynomial degree must be an int, got {p!r}")
    if p < _P_MIN or p > _P_MAX:
        raise ValueError(f"polynomial degree must be in [{_P_MIN}, {_P_MAX}], got {p}")
    x11, w11 = _lobatto_nodes_and_weights(p)
    nodes = 0.5 * (x11 + 1.0)
    weights = 0.5 * w11
    # pin the endpoints exactly so shared mesh nodes are bit-identical
    nodes[0], nodes[-1] = 0.0, 1.0
    diff = _diff_matrix(nodes)
    integ = _integration_matrix(nodes)
    boundary = np.zeros((p + 1, p + 1))
    boundary[0, 0] = -1.0
    boundary[-1, -1] = 1.0
    for a in (nodes, weights, diff, integ, boundary):
        a.setflags(write=False)
    return GLBasis(p=int(p), nodes=nodes, weights=weights, diff=diff,
                   integ=integ, boundary=boundary)
