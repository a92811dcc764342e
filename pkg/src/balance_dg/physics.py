"""Shallow water physics: fluxes, sources, entropy pairs, entropy Hessians.

State layout is ``U[..., 3] = (h, hu, hv)`` everywhere; all functions are
vectorized over leading axes.  The 1D solver evolves the same three-component
state (hv is passively advected), which keeps Coriolis rotation and the 2D
tensor-product extension uniform.

Entropy comes in two flavours selected by ``mode``:

* ``"plain"`` -- eta = g h^2/2 + h k with k = (u^2 + v^2)/2,
* ``"total"`` -- adds the bathymetry potential g b h (the lake-at-rest energy).

Both share the entropy flux structure F_eta = hu (g(h [+ b]) + k) and the
entropy variables W = (g(h [+ b]) - k, u, v).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

__all__ = [
    "PhysParams",
    "flux",
    "flux_x",
    "flux_y",
    "source",
    "source_terms_1d",
    "entropy_pair",
    "entropy_variables",
    "entropy_hessian_inverse",
    "max_wave_speed",
    "flux_jacobian_x",
]

Scalar = float
OmegaLike = Union[float, Callable[[np.ndarray], np.ndarray]]


def _zero_bath(x, *rest):
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass
class PhysParams:
    """Physical parameters of a run.

    ``omega`` is either a constant Coriolis parameter or a callable of the
    transverse coordinate y (2D).  ``b``/``db`` are the bathymetry and its
    analytic derivative: callables of x in 1D; in 2D ``b`` takes (x, y) and
    ``db`` is a (db/dx, db/dy) pair of such callables.
    """

    g: float = 9.80665
    omega: OmegaLike = 0.0
    c_f: float = 0.0
    b: Callable = field(default=_zero_bath)
    db: Callable = field(default=_zero_bath)

    def omega_at(self, y) -> np.ndarray:
        if callable(self.omega):
            return np.asarray(self.omega(np.asarray(y, dtype=float)), dtype=float)
        return np.full_like(np.asarray(y, dtype=float), float(self.omega))


def _split(U):
    h = U[..., 0]
    hu = U[..., 1]
    hv = U[..., 2]
    return h, hu, hv


def velocities(U):
    h, hu, hv = _split(U)
    return hu / h, hv / h


def flux_x(U, g: float) -> np.ndarray:
    """x-direction flux (hu, hu^2 + g h^2/2, hu v)."""
    h, hu, hv = _split(U)
    u = hu / h
    out = np.empty_like(U)
    out[..., 0] = hu
    out[..., 1] = hu * u + 0.5 * g * h * h
    out[..., 2] = hv * u
    return out


def flux_y(U, g: float) -> np.ndarray:
    """y-direction flux (hv, hu v, hv^2 + g h^2/2)."""
    h, hu, hv = _split(U)
    v = hv / h
    out = np.empty_like(U)
    out[..., 0] = hv
    out[..., 1] = hu * v
    out[..., 2] = hv * v + 0.5 * g * h * h
    return out


def flux(U, g: float) -> tuple[np.ndarray, np.ndarray]:
    """Both directional fluxes as a (F_x, F_y) pair."""
    return flux_x(U, g), flux_y(U, g)


def source_terms_1d(U, x, params: PhysParams, variant: str = "basic",
                    db_h: Optional[np.ndarray] = None,
                    dpb_h: Optional[np.ndarray] = None,
                    b_nodes: Optional[np.ndarray] = None) -> np.ndarray:
    """Momentum/transverse source of the 1D balance law.

    Components: (0, -h(g b' + c_f u + omega v), +omega h u).

    ``variant="basic"`` uses the analytic bathymetry slope ``params.db(x)``.
    ``variant="modified"`` replaces the topography term by the well-balanced
    combination -(g zeta d(b_h)/dx - d(g b_h^2/2)/dx) built from interpolant
    derivatives; callers must supply ``db_h``, ``dpb_h`` and ``b_nodes``
    (nodal interpolant data, shapes matching U[..., 0]).
    """
    h, hu, hv = _split(U)
    if callable(params.omega):
        raise ValueError("1D sources need a constant Coriolis parameter")
    omega = float(params.omega)
    out = np.zeros_like(U)
    if variant == "basic":
        out[..., 1] = -params.g * h * params.db(np.asarray(x, dtype=float))
    elif variant == "modified":
        if db_h is None or dpb_h is None or b_nodes is None:
            raise ValueError("modified source needs nodal interpolant data")
        zeta = h + b_nodes
        out[..., 1] = -(params.g * zeta * db_h - dpb_h)
    else:
        raise ValueError(f"unknown source variant {variant!r}")
    out[..., 1] += -params.c_f * hu - omega * hv
    out[..., 2] = omega * hu
    return out


def source(U, x, params: PhysParams, variant: str = "basic", **interp) -> np.ndarray:
    """Spec-facing alias of :func:`source_terms_1d`."""
    return source_terms_1d(U, x, params, variant, **interp)


def _kinetic(U):
    h, hu, hv = _split(U)
    return 0.5 * (hu * hu + hv * hv) / (h * h)


def entropy_pair(U, b, g: float, mode: str = "total", direction: str = "x"):
    """Entropy density and directional entropy flux.

    plain:  eta = g h^2/2 + h k,          F_eta = hu_n (g h + k)
    total:  eta = g h^2/2 + h k + g b h,  F_eta = hu_n (g (h + b) + k)

    with hu_n the momentum along ``direction``.
    """
    h, hu, hv = _split(U)
    k = _kinetic(U)
    b = np.asarray(b, dtype=float)
    mom = hu if direction == "x" else hv
    if mode == "plain":
        eta = 0.5 * g * h * h + h * k
        f_eta = mom * (g * h + k)
    elif mode == "total":
        eta = 0.5 * g * h * h + h * k + g * b * h
        f_eta = mom * (g * (h + b) + k)
    else:
        raise ValueError(f"unknown entropy mode {mode!r}")
    return eta, f_eta


def entropy_variables(U, b, g: float, mode: str = "total") -> np.ndarray:
    """Gradient of the entropy wrt conserved state: W = (g(h [+b]) - k, u, v)."""
    h, hu, hv = _split(U)
    k = _kinetic(U)
    b = np.asarray(b, dtype=float)
    out = np.empty_like(U)
    if mode == "plain":
        out[..., 0] = g * h - k
    elif mode == "total":
        out[..., 0] = g * (h + b) - k
    else:
        raise ValueError(f"unknown entropy mode {mode!r}")
    out[..., 1] = hu / h
    out[..., 2] = hv / h
    return out


def entropy_hessian_inverse(U, g: float) -> np.ndarray:
    """Closed-form inverse Hessian A0 = (d^2 eta / dU^2)^{-1}, shape (..., 3, 3).

    A0 = (1/g) [[1,  u,        v      ],
                [u,  g h + u^2, u v    ],
                [v,  u v,       g h + v^2]]

    Symmetric positive definite for h > 0; independent of the bathymetry
    (the total/plain entropies differ by a term linear in U).
    """
    h, hu, hv = _split(U)
    u = hu / h
    v = hv / h
    gh = g * h
    shape = U.shape[:-1] + (3, 3)
    a0 = np.empty(shape, dtype=float)
    a0[..., 0, 0] = 1.0
    a0[..., 0, 1] = u
    a0[..., 0, 2] = v
    a0[..., 1, 0] = u
    a0[..., 1, 1] = gh + u * u
    a0[..., 1, 2] = u * v
    a0[..., 2, 0] = v
    a0[..., 2, 1] = u * v
    a0[..., 2, 2] = gh + v * v
    a0 /= g
    return a0


def max_wave_speed(U, g: float, direction: str = "x") -> np.ndarray:
    """|u_n| + sqrt(g h) for the chosen normal direction."""
    h, hu, hv = _split(U)
    un = (hu if direction == "x" else hv) / h
    return np.abs(un) + np.sqrt(g * h)


def flux_jacobian_x(U, g: float) -> np.ndarray:
    """dF_x/dU, shape (..., 3, 3); eigenvalues are {u - c, u, u + c}."""
    h, hu, hv = _split(U)
    u = hu / h
    v = hv / h
    jac = np.zeros(U.shape[:-1] + (3, 3), dtype=float)
    jac[..., 0, 1] = 1.0
    jac[..., 1, 0] = g * h - u * u
    jac[..., 1, 1] = 2.0 * u
    jac[..., 2, 0] = -u * v
    jac[..., 2, 1] = v
    jac[..., 2, 2] = u
    return jac
