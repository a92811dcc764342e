"""1D collocated DG solver with global-flux source quadrature.

Semidiscrete form on each element K of width h with Gauss-Lobatto
operators (w, D, B):

    dU_i/dt = -(1/h) (D G)_i - (1/(h w_i)) [B (Ghat - G)]_i            (GF)
    dU_i/dt = -(1/h) (D F)_i - (1/(h w_i)) [B (Fhat - F)]_i + S_i      (standard)

where in global-flux mode G_i = F(U_i) - R_i with the source primitive
R_i = h (I S)_i accumulated from the element's left end.  Because R is
continued across interfaces (zero jump), interface penalties depend only on
the jumps of F and U, so both modes share the same numerical-flux code path.

The optional cell entropy correction adds  -(alpha_K/(h w_i)) Dcorr_i  with
Dcorr_i the Galerkin gradient of the entropy variables (weighted by the
inverse entropy Hessian) and alpha_K chosen so each element's entropy rate
matches a target flux balance Psi_K exactly:

    |K| d(mean eta)/dt = -Psi_K      at every evaluation.

Two targets are available: ``analytical_flux`` (entropy flux differences at
the faces plus the friction dissipation integral) and ``global_flux_flux``
(face jump terms plus the volume term int W . dG/dx, which vanishes on
discrete steady states and so preserves exact well-balancing).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .physics import (
    PhysParams,
    entropy_hessian_inverse,
    entropy_pair,
    entropy_variables,
    flux_x,
    max_wave_speed,
    source_terms_1d,
)
from .quadrature import GLBasis, build_basis

__all__ = [
    "Mesh1D",
    "SchemeConfig",
    "BoundaryCondition",
    "BoundarySpec",
    "SolverAbort",
    "RunResult",
    "Solver1D",
    "numerical_flux",
    "source_flux_increments",
    "bath_interpolant_data",
    "butcher_tableau",
]


class SolverAbort(RuntimeError):
    """Raised when the solution leaves the admissible set (NaN or h <= 0)."""

    def __init__(self, message: str, t: float, step: int):
        super().__init__(f"{message} (t={t:.6g}, step {step})")
        self.t = t
        self.step = step


class Mesh1D:
    """Uniform 1D mesh; per-element node coordinates share interface values
    bit-for-bit (node 0 / node p are set from the same edge array)."""

    def __init__(self, x_l: float, x_r: float, n_elements: int, basis: GLBasis):
        if not x_r > x_l:
            raise ValueError("need x_r > x_l")
        if n_elements < 1:
            raise ValueError("need at least one element")
        self.x_l = float(x_l)
        self.x_r = float(x_r)
        self.n_elements = int(n_elements)
        self.edges = np.linspace(self.x_l, self.x_r, self.n_elements + 1)
        self.h_elem = (self.x_r - self.x_l) / self.n_elements
        nodes = self.edges[:-1, None] + self.h_elem * basis.nodes[None, :]
        nodes[:, 0] = self.edges[:-1]
        nodes[:, -1] = self.edges[1:]
        nodes.setflags(write=False)
        self.nodes = nodes

    def __repr__(self):
        return (f"Mesh1D([{self.x_l}, {self.x_r}], n_elements={self.n_elements}, "
                f"nodes_per_element={self.nodes.shape[1]})")


@dataclass
class SchemeConfig:
    """Discretization knobs; defaults give the fully well-balanced scheme."""

    p: int = 2
    flux_alpha: float = 0.5
    dissipation: str = "rusanov"            # none | rusanov
    source_variant: str = "modified"        # basic | modified
    quadrature_mode: str = "global_flux"    # standard | global_flux
    entropy_correction: str = "off"         # off | analytical_flux | global_flux_flux
    entropy_mode: str = "total"             # plain | total
    lambda_entropy: float = 0.5
    entropy_floor: float = 1e-8
    time_integrator: str = "auto"           # auto | ssprk33 | rk44
    cfl: Optional[float] = None             # None -> 0.5/(2p+1)

    def validate(self) -> "SchemeConfig":
        if self.dissipation not in ("none", "rusanov"):
            raise ValueError(f"unknown dissipation {self.dissipation!r}")
        if self.source_variant not in ("basic", "modified"):
            raise ValueError(f"unknown source variant {self.source_variant!r}")
        if self.quadrature_mode not in ("standard", "global_flux"):
            raise ValueError(f"unknown quadrature mode {self.quadrature_mode!r}")
        if self.entropy_correction not in ("off", "analytical_flux",
                                           "global_flux_flux"):
            raise ValueError(
                f"unknown entropy correction {self.entropy_correction!r}")
        if (self.entropy_correction == "global_flux_flux"
                and self.quadrature_mode != "global_flux"):
            raise ValueError("global_flux_flux correction requires "
                             "quadrature_mode='global_flux'")
        if self.entropy_mode not in ("plain", "total"):
            raise ValueError(f"unknown entropy mode {self.entropy_mode!r}")
        if not 0.0 <= self.flux_alpha <= 1.0:
            raise ValueError("flux_alpha must lie in [0, 1]")
        if self.time_integrator not in ("auto", "ssprk33", "rk44"):
            raise ValueError(f"unknown time integrator {self.time_integrator!r}")
        if self.cfl is not None and self.cfl <= 0.0:
            raise ValueError("cfl must be positive")
        return self

    def cfl_value(self) -> float:
        return self.cfl if self.cfl is not None else 0.5 / (2 * self.p + 1)

    def integrator_name(self) -> str:
        if self.time_integrator != "auto":
            return self.time_integrator
        return "ssprk33" if self.p <= 2 else "rk44"


@dataclass
class BoundaryCondition:
    """One side: ``periodic``, ``reflective`` or ``dirichlet`` with a fixed
    state (length-3 array) or a time closure t -> state."""

    kind: str
    state: Union[None, np.ndarray, Callable[[float], np.ndarray]] = None

    @classmethod
    def periodic(cls):
        return cls("periodic")

    @classmethod
    def reflective(cls):
        return cls("reflective")

    @classmethod
    def dirichlet(cls, state):
        return cls("dirichlet", state)

    def ghost(self, interior: np.ndarray, t: float) -> np.ndarray:
        if self.kind == "dirichlet":
            s = self.state(t) if callable(self.state) else self.state
            return np.asarray(s, dtype=float)
        if self.kind == "reflective":
            return np.array([interior[0], -interior[1], interior[2]])
        raise ValueError(f"no ghost state for kind {self.kind!r}")


@dataclass
class BoundarySpec:
    """Left/right boundary pair; periodic must be used on both ends or neither."""

    left: BoundaryCondition
    right: BoundaryCondition

    def __post_init__(self):
        if (self.left.kind == "periodic") != (self.right.kind == "periodic"):
            raise ValueError("periodic boundaries must be used on both ends")

    @property
    def periodic(self) -> bool:
        return self.left.kind == "periodic"

    @classmethod
    def all_periodic(cls):
        return cls(BoundaryCondition.periodic(), BoundaryCondition.periodic())

    @classmethod
    def dirichlet(cls, left_state, right_state):
        return cls(BoundaryCondition.dirichlet(left_state),
                   BoundaryCondition.dirichlet(right_state))


def numerical_flux(u_minus, u_plus, g_minus, g_plus, g_const: float,
                   alpha: float = 0.5, dissipation: str = "rusanov",
                   direction: str = "x") -> np.ndarray:
    """Single-valued interface flux  alpha G+ + (1-alpha) G- - (s/2)(U+ - U-).

    ``s`` is the larger of the two local wave speeds |u_n| + sqrt(g h)
    (rusanov); ``dissipation="none"`` drops the jump term (central flux).
    """
    u_minus = np.asarray(u_minus, dtype=float)
    u_plus = np.asarray(u_plus, dtype=float)
    ghat = alpha * np.asarray(g_plus, dtype=float) \
        + (1.0 - alpha) * np.asarray(g_minus, dtype=float)
    if dissipation == "rusanov":
        s = np.maximum(max_wave_speed(u_minus, g_const, direction),
                       max_wave_speed(u_plus, g_const, direction))
        ghat = ghat - 0.5 * s[..., None] * (u_plus - u_minus)
    elif dissipation != "none":
        raise ValueError(f"unknown dissipation {dissipation!r}")
    return ghat


def bath_interpolant_data(mesh: Mesh1D, basis: GLBasis, params: PhysParams):
    """Nodal bathymetry plus interpolant derivatives of b and g b^2/2."""
    b_nodes = params.b(mesh.nodes)
    db_h = np.einsum("ij,ej->ei", basis.diff, b_nodes) / mesh.h_elem
    dpb_h = np.einsum("ij,ej->ei", basis.diff,
                      0.5 * params.g * b_nodes ** 2) / mesh.h_elem
    return b_nodes, db_h, dpb_h


def source_flux_increments(U, mesh: Mesh1D, basis: GLBasis, params: PhysParams,
                           source_variant: str = "modified") -> np.ndarray:
    """Source primitives R_i = h (I S)_i per element; entry 0 is exactly zero."""
    b_nodes, db_h, dpb_h = bath_interpolant_data(mesh, basis, params)
    if source_variant == "modified":
        S = source_terms_1d(U, mesh.nodes, params, "modified",
                            db_h=db_h, dpb_h=dpb_h, b_nodes=b_nodes)
    else:
        S = source_terms_1d(U, mesh.nodes, params, "basic")
    return mesh.h_elem * np.einsum("ij,ejc->eic", basis.integ, S)


_TABLEAUS = {
    # (A, b, c); both schemes are written in Butcher form so auxiliary scalar
    # quadratures (friction dissipation) use exactly the same weights.
    "ssprk33": (np.array([[0.0, 0.0, 0.0],
                          [1.0, 0.0, 0.0],
                          [0.25, 0.25, 0.0]]),
                np.array([1 / 6, 1 / 6, 2 / 3]),
                np.array([0.0, 1.0, 0.5])),
    "rk44": (np.array([[0.0, 0.0, 0.0, 0.0],
                       [0.5, 0.0, 0.0, 0.0],
                       [0.0, 0.5, 0.0, 0.0],
                       [0.0, 0.0, 1.0, 0.0]]),
             np.array([1 / 6, 1 / 3, 1 / 3, 1 / 6]),
             np.array([0.0, 0.5, 0.5, 1.0])),
}


def butcher_tableau(name: str):
    return _TABLEAUS[name]


@dataclass
class RunResult:
    """Final state plus recorded time series and snapshots."""

    U: np.ndarray
    t: float
    n_steps: int
    times: np.ndarray
    total_entropy: np.ndarray       # sum_K |K| mean(eta)
    n_tot: np.ndarray               # total entropy + integrated friction dissipation
    snapshots: list = field(default_factory=list)   # [(t, U copy), ...]


class Solver1D:
    """Method-of-lines solver for one mesh/config/params/boundary bundle."""

    def __init__(self, mesh: Mesh1D, config: SchemeConfig, params: PhysParams,
                 boundary: BoundarySpec, basis: Optional[GLBasis] = None):
        self.mesh = mesh
        self.config = config.validate()
        self.params = params
        self.boundary = boundary
        self.basis = basis if basis is not None else build_basis(config.p)
        if self.basis.n_nodes != mesh.nodes.shape[1]:
            raise ValueError("mesh was built with a different polynomial degree")
        self.b_nodes, self.db_h, self.dpb_h = bath_interpolant_data(
            mesh, self.basis, params)
        self._db_analytic = params.db(mesh.nodes)
        # single-valued bathymetry at the faces (nodal b is continuous)
        nb = np.empty(mesh.n_elements + 1)
        nb[:-1] = self.b_nodes[:, 0]
        nb[-1] = self.b_nodes[-1, -1]
        self.b_faces = nb

    # -- spatial operator ---------------------------------------------------

    def _check_admissible(self, U, t: float, step: int):
        if not np.all(np.isfinite(U)):
            raise SolverAbort("non-finite state detected", t, step)
        if np.any(U[..., 0] <= 0.0):
            raise SolverAbort("non-positive water depth", t, step)

    def _sources(self, U):
        cfg = self.config
        if cfg.source_variant == "modified":
            return source_terms_1d(U, self.mesh.nodes, self.params, "modified",
                                   db_h=self.db_h, dpb_h=self.dpb_h,
                                   b_nodes=self.b_nodes)
        return source_terms_1d(U, self.mesh.nodes, self.params, "basic")

    def _face_traces(self, U, t: float):
        """Left/right states at the N+1 faces (ghosts fill the outer ones)."""
        n = self.mesh.n_elements
        um = np.empty((n + 1, 3))
        up = np.empty((n + 1, 3))
        um[1:] = U[:, -1, :]
        up[:-1] = U[:, 0, :]
        if self.boundary.periodic:
            um[0] = U[-1, -1, :]
            up[-1] = U[0, 0, :]
        else:
            um[0] = self.boundary.left.ghost(U[0, 0, :], t)
            up[-1] = self.boundary.right.ghost(U[-1, -1, :], t)
        return um, up

    def rhs(self, U, t: float = 0.0, diag: Optional[dict] = None) -> np.ndarray:
        """Semidiscrete right-hand side dU/dt at time t (state shape (N, p+1, 3))."""
        cfg = self.config
        basis = self.basis
        h_el = self.mesh.h_elem
        g = self.params.g
        w = basis.weights

        F = flux_x(U, g)
        S = self._sources(U)
        if cfg.quadrature_mode == "global_flux":
            G = F - h_el * np.einsum("ij,ejc->eic", basis.integ, S)
            DG = np.einsum("ij,ejc->eic", basis.diff, G)
            out = -DG / h_el
        else:
            DG = None
            out = -np.einsum("ij,ejc->eic", basis.diff, F) / h_el + S

        um, up = self._face_traces(U, t)
        fm = flux_x(um, g)
        fp = flux_x(up, g)
        d_flux = fp - fm
        d_state = up - um
        if cfg.dissipation == "rusanov":
            s = np.maximum(max_wave_speed(um, g), max_wave_speed(up, g))
            jump_term = -0.5 * s[:, None] * d_state
        else:
            jump_term = np.zeros_like(d_state)
        pen_right = cfg.flux_alpha * d_flux + jump_term
        pen_left = -(1.0 - cfg.flux_alpha) * d_flux + jump_term
        out[:, -1, :] -= pen_right[1:] / (h_el * w[-1])
        out[:, 0, :] += pen_left[:-1] / (h_el * w[0])

        if cfg.entropy_correction != "off" or diag is not None:
            d_f = self._friction_dissipation(U)
            if diag is not None:
                diag["d_f"] = d_f

        if cfg.entropy_correction != "off":
            out = self._apply_entropy_correction(U, out, DG, um, up, jump_term,
                                                 d_f, diag)

        if diag is not None:
            diag["max_speed"] = float(np.max(max_wave_speed(U, g)))
            diag["deta_dt"] = h_el * np.einsum(
                "i,eic,eic->e", w,
                entropy_variables(U, self.b_nodes, g, cfg.entropy_mode), out)
        return out

    def _friction_dissipation(self, U) -> np.ndarray:
        """D_f per element: 2 h int_K c_f h k (zero for frictionless runs)."""
        if self.params.c_f == 0.0:
            return np.zeros(self.mesh.n_elements)
        h = U[..., 0]
        k = 0.5 * (U[..., 1] ** 2 + U[..., 2] ** 2) / (h * h)
        return 2.0 * self.mesh.h_elem * self.params.c_f * np.einsum(
            "i,ei->e", self.basis.weights, h * k)

    def _apply_entropy_correction(self, U, rhs0, DG, um, up, jump_term,
                                  d_f, diag):
        cfg = self.config
        basis = self.basis
        g = self.params.g
        h_el = self.mesh.h_elem
        w = basis.weights
        lam = cfg.lambda_entropy

        W = entropy_variables(U, self.b_nodes, g, cfg.entropy_mode)
        a0 = entropy_hessian_inverse(U, g)
        dW = np.einsum("ij,ejc->eic", basis.diff, W)
        a0dW = np.einsum("eicd,eid->eic", a0, dW)
        denom = np.einsum("i,eic,eic->e", w, dW, a0dW) / h_el
        dcorr = np.einsum("ji,j,ejc->eic", basis.diff, w, a0dW) / h_el

        phi = -h_el * np.einsum("i,eic,eic->e", w, W, rhs0)

        _, feta_m = entropy_pair(um, self.b_faces, g, cfg.entropy_mode)
        _, feta_p = entropy_pair(up, self.b_faces, g, cfg.entropy_mode)
        d_feta = feta_p - feta_m
        # The numerical entropy flux must account for the interface jump
        # dissipation, otherwise the per-element target rate misses the
        # dissipated entropy by O(jump) and the coefficient blows up wherever
        # the entropy-gradient norm is small; the mean-W weighting keeps the
        # flux single-valued, so the global telescoping sum is unchanged.
        wm = entropy_variables(um, self.b_faces, g, cfg.entropy_mode)
        wp = entropy_variables(up, self.b_faces, g, cfg.entropy_mode)
        diss_eta = 0.5 * np.einsum("fc,fc->f", wm + wp, jump_term)
        face_term = (lam * d_feta[1:] + (1.0 - lam) * d_feta[:-1]
                     + diss_eta[1:] - diss_eta[:-1])
        if cfg.entropy_correction == "analytical_flux":
            _, feta_r = entropy_pair(U[:, -1, :], self.b_nodes[:, -1], g,
                                     cfg.entropy_mode)
            _, feta_l = entropy_pair(U[:, 0, :], self.b_nodes[:, 0], g,
                                     cfg.entropy_mode)
            psi = face_term + (feta_r - feta_l) + d_f
        else:  # global_flux_flux
            psi = face_term + np.einsum("i,eic,eic->e", w, W, DG)

        # Below the floor the correction direction cannot carry the requested
        # entropy-rate change (its own entropy signature is the denominator),
        # so dividing by the floor only amplifies face-jump noise: near-
        # constant elements switch the correction off instead.
        alpha_k = np.where(denom >= cfg.entropy_floor,
                           (psi - phi) / np.maximum(denom, cfg.entropy_floor),
                           0.0)
        out = rhs0 - (alpha_k[:, None, None] * dcorr
                      / (h_el * w[None, :, None]))
        if diag is not None:
            diag.update(psi=psi, phi=phi, alpha_k=alpha_k, denom=denom)
        return out

    # -- time integration ---------------------------------------------------

    def max_dt(self, U) -> float:
        smax = float(np.max(max_wave_speed(U, self.params.g)))
        return (self.config.cfl_value() * self.mesh.h_elem
                / ((2 * self.config.p + 1) * smax))

    def step(self, U, t: float, dt: float, step_index: int = 0,
             stage_monitor: Optional[Callable] = None) -> tuple[np.ndarray, float]:
        """One explicit RK step; returns (U_new, friction integral increment)."""
        A, b, c = _TABLEAUS[self.config.integrator_name()]
        n_stage = b.size
        stages = []
        df_stage = np.empty(n_stage)
        for s in range(n_stage):
            Us = U
            if s > 0:
                Us = U + dt * sum(A[s, r] * stages[r] for r in range(s)
                                  if A[s, r] != 0.0)
            ts = t + c[s] * dt
            self._check_admissible(Us, ts, step_index)
            if stage_monitor is not None:
                stage_monitor(self, Us, ts)
            stages.append(self.rhs(Us, ts))
            df_stage[s] = float(self._friction_dissipation(Us).sum())
        U_new = U + dt * sum(b[s] * stages[s] for s in range(n_stage))
        return U_new, float(dt * (b * df_stage).sum())

    def total_entropy(self, U) -> float:
        eta, _ = entropy_pair(U, self.b_nodes, self.params.g,
                              self.config.entropy_mode)
        return float(self.mesh.h_elem * np.einsum("i,ei->", self.basis.weights, eta))

    def run(self, U0, t_final: float, t0: float = 0.0,
            snapshot_times: Sequence[float] = (),
            stage_monitor: Optional[Callable] = None,
            max_steps: Optional[int] = None) -> RunResult:
        """Advance from t0 to t_final with CFL-limited steps.

        Steps are shortened to land exactly on snapshot times and on t_final,
        so recorded states are at the requested instants (bit-reproducible:
        the dt sequence depends only on the state history).
        """
        U = np.array(U0, dtype=float)
        self._check_admissible(U, t0, 0)
        t = float(t0)
        pending = sorted(float(ts) for ts in snapshot_times
                         if t0 <= ts <= t_final)
        snapshots = []
        times = [t]
        ent = [self.total_entropy(U)]
        fr_int = 0.0
        ntot = [ent[0]]
        tiny = 1e-12 * max(1.0, abs(t_final))
        while pending and pending[0] <= t0 + tiny:
            snapshots.append((pending.pop(0), U.copy()))
        n_steps = 0
        while t < t_final - tiny:
            dt = min(self.max_dt(U), t_final - t)
            if pending:
                dt = min(dt, pending[0] - t)
            if dt <= 1e-14 * max(1.0, abs(t_final)):
                raise SolverAbort("time step collapsed", t, n_steps)
            U, df_inc = self.step(U, t, dt, n_steps, stage_monitor)
            t += dt
            n_steps += 1
            if max_steps is not None and n_steps > max_steps:
                raise SolverAbort("step budget exceeded", t, n_steps)
            fr_int += df_inc
            times.append(t)
            ent.append(self.total_entropy(U))
            ntot.append(ent[-1] + fr_int)
            if pending and t >= pending[0] - tiny:
                snapshots.append((pending.pop(0), U.copy()))
        self._check_admissible(U, t, n_steps)
        return RunResult(U=U, t=t, n_steps=n_steps, times=np.array(times),
                         total_entropy=np.array(ent), n_tot=np.array(ntot),
                         snapshots=snapshots)
