"""Tensor-product 2D solver on Cartesian Gauss-Lobatto grids.

The semidiscrete operator applies the 1D machinery dimension by dimension:
every x-row of nodes sees the 1D global-flux (or standard) operator with the
x-flux and the x-direction source

    S_x = (0, -h (g db/dx) - c_f hu - omega(y) hv, 0)

and every y-column the same with the y-flux and

    S_y = (0, 0, -h (g db/dy) - c_f hv + omega(y) hu).

Interface penalties act per face row/column; the transverse quadrature weight
cancels, so each face node uses exactly the 1D penalty formula.  The entropy
correction mirrors the 1D per-element construction with four face integrals
and both directional volume terms.

State layout: ``U[ex, ey, i, j, comp]`` with ``i`` the x-node and ``j`` the
y-node inside element ``(ex, ey)``.
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
    flux_y,
    max_wave_speed,
)
from .quadrature import GLBasis
from .solver_core import _TABLEAUS, RunResult, SchemeConfig, SolverAbort

__all__ = [
    "Mesh2D",
    "FaceCondition",
    "BoundarySpec2D",
    "Solver2D",
    "directional_steady_solution",
]


class Mesh2D:
    """Uniform rectangular mesh with tensor-product GL nodes per element."""

    def __init__(self, x_l: float, x_r: float, y_l: float, y_r: float,
                 nx: int, ny: int, basis: GLBasis):
        if nx < 1 or ny < 1:
            raise ValueError("need at least one element per direction")
        self.basis = basis
        self.nx = int(nx)
        self.ny = int(ny)
        self.x_edges = np.linspace(x_l, x_r, nx + 1)
        self.y_edges = np.linspace(y_l, y_r, ny + 1)
        self.hx = (x_r - x_l) / nx
        self.hy = (y_r - y_l) / ny

        def line_nodes(edges, h):
            nodes = edges[:-1, None] + h * basis.nodes[None, :]
            nodes[:, 0] = edges[:-1]
            nodes[:, -1] = edges[1:]
            return nodes

        self.nodes_x = line_nodes(self.x_edges, self.hx)   # (nx, p+1)
        self.nodes_y = line_nodes(self.y_edges, self.hy)   # (ny, p+1)
        # broadcast coordinate grids, shape (nx, ny, p+1, p+1)
        self.X = np.broadcast_to(
            self.nodes_x[:, None, :, None],
            (self.nx, self.ny, basis.n_nodes, basis.n_nodes)).copy()
        self.Y = np.broadcast_to(
            self.nodes_y[None, :, None, :],
            (self.nx, self.ny, basis.n_nodes, basis.n_nodes)).copy()
        for arr in (self.nodes_x, self.nodes_y, self.X, self.Y):
            arr.setflags(write=False)

    @property
    def n_elements(self) -> int:
        return self.nx * self.ny

    def __repr__(self):
        return (f"Mesh2D([{self.x_edges[0]}, {self.x_edges[-1]}] x "
                f"[{self.y_edges[0]}, {self.y_edges[-1]}], "
                f"{self.nx}x{self.ny} elements, p={self.basis.p})")


@dataclass(frozen=True)
class FaceCondition:
    """Boundary treatment of one domain side.

    ``trace`` supplies Dirichlet data: an array shaped like the face trace
    (n_tangential_elements, p+1, 3) or a callable of time returning one.
    """

    kind: str                    # periodic | reflective | dirichlet
    trace: Optional[Union[np.ndarray, Callable]] = None

    @classmethod
    def periodic(cls):
        return cls("periodic")

    @classmethod
    def reflective(cls):
        return cls("reflective")

    @classmethod
    def dirichlet(cls, trace):
        return cls("dirichlet", trace)

    def ghost_trace(self, interior: np.ndarray, t: float,
                    normal_comp: int) -> np.ndarray:
        if self.kind == "reflective":
            ghost = interior.copy()
            ghost[..., normal_comp] = -ghost[..., normal_comp]
            return ghost
        if self.kind == "dirichlet":
            data = self.trace(t) if callable(self.trace) else self.trace
            return np.asarray(data, dtype=float)
        raise RuntimeError("periodic faces have no ghost trace")


@dataclass(frozen=True)
class BoundarySpec2D:
    left: FaceCondition
    right: FaceCondition
    bottom: FaceCondition
    top: FaceCondition

    def __post_init__(self):
        for a, b, axis in ((self.left, self.right, "x"),
                           (self.bottom, self.top, "y")):
            if (a.kind == "periodic") != (b.kind == "periodic"):
                raise ValueError(f"periodic {axis}-faces must be paired")

    @property
    def periodic_x(self) -> bool:
        return self.left.kind == "periodic"

    @property
    def periodic_y(self) -> bool:
        return self.bottom.kind == "periodic"

    @classmethod
    def all_periodic(cls):
        return cls(*(FaceCondition.periodic() for _ in range(4)))


class Solver2D:
    """Method-of-lines solver for one 2D mesh/config/params/boundary bundle."""

    def __init__(self, mesh: Mesh2D, config: SchemeConfig, params: PhysParams,
                 boundary: BoundarySpec2D, basis: Optional[GLBasis] = None):
        self.mesh = mesh
        self.config = config.validate()
        self.params = params
        self.boundary = boundary
        self.basis = basis if basis is not None else mesh.basis
        if self.basis.p != config.p:
            raise ValueError("basis degree does not match config.p")

        g = params.g
        self.b_nodes = params.b(mesh.X, mesh.Y)
        D = self.basis.diff
        self.db_x_h = np.einsum("ik,abkj->abij", D, self.b_nodes) / mesh.hx
        self.db_y_h = np.einsum("jk,abik->abij", D, self.b_nodes) / mesh.hy
        pb = 0.5 * g * self.b_nodes ** 2
        self.dpb_x_h = np.einsum("ik,abkj->abij", D, pb) / mesh.hx
        self.dpb_y_h = np.einsum("jk,abik->abij", D, pb) / mesh.hy
        if config.source_variant == "basic":
            if params.db is None:
                raise ValueError("basic source variant needs analytic "
                                 "bathymetry gradients (params.db)")
            dbx, dby = params.db
            self.db_x = dbx(mesh.X, mesh.Y)
            self.db_y = dby(mesh.X, mesh.Y)
        self.omega_nodes = params.omega_at(mesh.Y)
        if np.ndim(self.omega_nodes) == 0:
            self.omega_nodes = np.full_like(mesh.Y, float(self.omega_nodes))

    # -- sources ------------------------------------------------------------

    def _sources(self, U):
        """Directional sources S_x, S_y at all nodes."""
        g = self.params.g
        c_f = self.params.c_f
        h = U[..., 0]
        hu = U[..., 1]
        hv = U[..., 2]
        if self.config.source_variant == "modified":
            zeta = h + self.b_nodes
            grav_x = -(g * zeta * self.db_x_h - self.dpb_x_h)
            grav_y = -(g * zeta * self.db_y_h - self.dpb_y_h)
        else:
            grav_x = -g * h * self.db_x
            grav_y = -g * h * self.db_y
        Sx = np.zeros_like(U)
        Sy = np.zeros_like(U)
        Sx[..., 1] = grav_x - c_f * hu - self.omega_nodes * hv
        Sy[..., 2] = grav_y - c_f * hv + self.omega_nodes * hu
        return Sx, Sy

    # -- face traces ----------------------------------------------------------

    def _traces_x(self, U, t):
        """Minus/plus traces at the nx+1 x-interfaces, shape (nx+1, ny, p+1, 3)."""
        left_int = U[0, :, 0, :, :]
        right_int = U[-1, :, -1, :, :]
        if self.boundary.periodic_x:
            ghost_l, ghost_r = right_int, left_int
        else:
            ghost_l = self.boundary.left.ghost_trace(left_int, t, 1)
            ghost_r = self.boundary.right.ghost_trace(right_int, t, 1)
        um = np.concatenate([ghost_l[None], U[:, :, -1, :, :]], axis=0)
        up = np.concatenate([U[:, :, 0, :, :], ghost_r[None]], axis=0)
        return um, up

    def _traces_y(self, U, t):
        """Minus/plus traces at the ny+1 y-interfaces, shape (nx, ny+1, p+1, 3)."""
        bottom_int = U[:, 0, :, 0, :]
        top_int = U[:, -1, :, -1, :]
        if self.boundary.periodic_y:
            ghost_b, ghost_t = top_int, bottom_int
        else:
            ghost_b = self.boundary.bottom.ghost_trace(bottom_int, t, 2)
            ghost_t = self.boundary.top.ghost_trace(top_int, t, 2)
        um = np.concatenate([ghost_b[:, None], U[:, :, :, -1, :]], axis=1)
        up = np.concatenate([U[:, :, :, 0, :], ghost_t[:, None]], axis=1)
        return um, up

    @staticmethod
    def _penalties(um, up, fm, fp, s, alpha):
        d_flux = fp - fm
        jump = -0.5 * s[..., None] * (up - um)
        return alpha * d_flux + jump, -(1.0 - alpha) * d_flux + jump

    # -- semidiscrete operator ------------------------------------------------

    def rhs(self, U, t: float = 0.0, diag: Optional[dict] = None) -> np.ndarray:
        cfg = self.config
        basis = self.basis
        mesh = self.mesh
        g = self.params.g
        w = basis.weights
        D = basis.diff

        Fx = flux_x(U, g)
        Fy = flux_y(U, g)
        Sx, Sy = self._sources(U)
        if cfg.quadrature_mode == "global_flux":
            Gx = Fx - mesh.hx * np.einsum("ik,abkjc->abijc", basis.integ, Sx)
            Gy = Fy - mesh.hy * np.einsum("jk,abikc->abijc", basis.integ, Sy)
            DxGx = np.einsum("ik,abkjc->abijc", D, Gx)
            DyGy = np.einsum("jk,abikc->abijc", D, Gy)
            out = -DxGx / mesh.hx - DyGy / mesh.hy
        else:
            DxGx = DyGy = None
            out = (-np.einsum("ik,abkjc->abijc", D, Fx) / mesh.hx
                   - np.einsum("jk,abikc->abijc", D, Fy) / mesh.hy
                   + Sx + Sy)

        dissip = cfg.dissipation == "rusanov"

        um, up = self._traces_x(U, t)
        fm, fp = flux_x(um, g), flux_x(up, g)
        s = (np.maximum(max_wave_speed(um, g, "x"), max_wave_speed(up, g, "x"))
             if dissip else np.zeros(um.shape[:-1]))
        jt_x = -0.5 * s[..., None] * (up - um)
        pen_r, pen_l = self._penalties(um, up, fm, fp, s, cfg.flux_alpha)
        out[:, :, -1, :, :] -= pen_r[1:] / (mesh.hx * w[-1])
        out[:, :, 0, :, :] += pen_l[:-1] / (mesh.hx * w[0])
        traces_x = (um, up)

        vm, vp = self._traces_y(U, t)
        fym, fyp = flux_y(vm, g), flux_y(vp, g)
        s = (np.maximum(max_wave_speed(vm, g, "y"), max_wave_speed(vp, g, "y"))
             if dissip else np.zeros(vm.shape[:-1]))
        jt_y = -0.5 * s[..., None] * (vp - vm)
        pen_r, pen_l = self._penalties(vm, vp, fym, fyp, s, cfg.flux_alpha)
        out[:, :, :, -1, :] -= pen_r[:, 1:] / (mesh.hy * w[-1])
        out[:, :, :, 0, :] += pen_l[:, :-1] / (mesh.hy * w[0])
        traces_y = (vm, vp)

        if cfg.entropy_correction != "off" or diag is not None:
            d_f = self._friction_dissipation(U)
            if diag is not None:
                diag["d_f"] = d_f

        if cfg.entropy_correction != "off":
            out = self._apply_entropy_correction(U, out, DxGx, DyGy,
                                                 traces_x, traces_y,
                                                 jt_x, jt_y, d_f, diag)

        if diag is not None:
            diag["max_speed_x"] = float(np.max(max_wave_speed(U, g, "x")))
            diag["max_speed_y"] = float(np.max(max_wave_speed(U, g, "y")))
            W = entropy_variables(U, self.b_nodes, g, cfg.entropy_mode)
            diag["deta_dt"] = mesh.hx * mesh.hy * np.einsum(
                "i,j,abijc,abijc->ab", w, w, W, out)
        return out

    def _friction_dissipation(self, U) -> np.ndarray:
        if self.params.c_f == 0.0:
            return np.zeros((self.mesh.nx, self.mesh.ny))
        h = U[..., 0]
        k = 0.5 * (U[..., 1] ** 2 + U[..., 2] ** 2) / (h * h)
        w = self.basis.weights
        return (2.0 * self.mesh.hx * self.mesh.hy * self.params.c_f
                * np.einsum("i,j,abij->ab", w, w, h * k))

    def _apply_entropy_correction(self, U, rhs0, DxGx, DyGy,
                                  traces_x, traces_y, jt_x, jt_y, d_f, diag):
        cfg = self.config
        basis = self.basis
        mesh = self.mesh
        g = self.params.g
        w = basis.weights
        D = basis.diff
        lam = cfg.lambda_entropy
        hx, hy = mesh.hx, mesh.hy

        W = entropy_variables(U, self.b_nodes, g, cfg.entropy_mode)
        a0 = entropy_hessian_inverse(U, g)
        dWx = np.einsum("ik,abkjc->abijc", D, W)
        dWy = np.einsum("jk,abikc->abijc", D, W)
        a0dWx = np.einsum("abijcd,abijd->abijc", a0, dWx)
        a0dWy = np.einsum("abijcd,abijd->abijc", a0, dWy)
        denom = (np.einsum("i,j,abijc,abijc->ab", w, w, dWx, a0dWx) * hy / hx
                 + np.einsum("i,j,abijc,abijc->ab", w, w, dWy, a0dWy) * hx / hy)
        # per-direction mirror of the 1D operator: the x-part acts on every
        # y-row with only the x-node weight in its denominator (and vice
        # versa), which makes the elementwise entropy identity exact
        corr_x = (np.einsum("ki,k,abkjc->abijc", D, w, a0dWx)
                  / (hx * hx * w[None, None, :, None, None]))
        corr_y = (np.einsum("kj,k,abikc->abijc", D, w, a0dWy)
                  / (hy * hy * w[None, None, None, :, None]))

        phi = -hx * hy * np.einsum("i,j,abijc,abijc->ab", w, w, W, rhs0)

        um, up = traces_x
        b_faces_x = self._face_bathymetry_x()
        _, feta_m = entropy_pair(um, b_faces_x, g, cfg.entropy_mode)
        _, feta_p = entropy_pair(up, b_faces_x, g, cfg.entropy_mode)
        # jump-dissipation part of the numerical entropy flux; see the note in
        # solver_core.Solver1D._apply_entropy_correction
        wm = entropy_variables(um, b_faces_x, g, cfg.entropy_mode)
        wp = entropy_variables(up, b_faces_x, g, cfg.entropy_mode)
        diss_x = 0.5 * np.einsum("j,fbjc,fbjc->fb", w, wm + wp, jt_x) * hy
        d_feta_x = np.einsum("j,fbj->fb", w, feta_p - feta_m) * hy
        face_x = (lam * d_feta_x[1:] + (1.0 - lam) * d_feta_x[:-1]
                  + diss_x[1:] - diss_x[:-1])

        vm, vp = traces_y
        b_faces_y = self._face_bathymetry_y()
        _, geta_m = entropy_pair(vm, b_faces_y, g, cfg.entropy_mode,
                                 direction="y")
        _, geta_p = entropy_pair(vp, b_faces_y, g, cfg.entropy_mode,
                                 direction="y")
        wm = entropy_variables(vm, b_faces_y, g, cfg.entropy_mode)
        wp = entropy_variables(vp, b_faces_y, g, cfg.entropy_mode)
        diss_y = 0.5 * np.einsum("i,afic,afic->af", w, wm + wp, jt_y) * hx
        d_feta_y = np.einsum("i,afi->af", w, geta_p - geta_m) * hx
        face_y = (lam * d_feta_y[:, 1:] + (1.0 - lam) * d_feta_y[:, :-1]
                  + diss_y[:, 1:] - diss_y[:, :-1])

        if cfg.entropy_correction == "analytical_flux":
            _, feta_r = entropy_pair(U[:, :, -1, :, :],
                                     self.b_nodes[:, :, -1, :], g,
                                     cfg.entropy_mode)
            _, feta_l = entropy_pair(U[:, :, 0, :, :],
                                     self.b_nodes[:, :, 0, :], g,
                                     cfg.entropy_mode)
            _, geta_t = entropy_pair(U[:, :, :, -1, :],
                                     self.b_nodes[:, :, :, -1], g,
                                     cfg.entropy_mode, direction="y")
            _, geta_b = entropy_pair(U[:, :, :, 0, :],
                                     self.b_nodes[:, :, :, 0], g,
                                     cfg.entropy_mode, direction="y")
            vol = (np.einsum("j,abj->ab", w, feta_r - feta_l) * hy
                   + np.einsum("i,abi->ab", w, geta_t - geta_b) * hx)
            psi = face_x + face_y + vol + d_f
        else:
            vol = (np.einsum("i,j,abijc,abijc->ab", w, w, W, DxGx) * hy
                   + np.einsum("i,j,abijc,abijc->ab", w, w, W, DyGy) * hx)
            psi = face_x + face_y + vol

        # Near-constant elements switch the correction off; see the note in
        # solver_core.Solver1D._apply_entropy_correction.
        alpha_k = np.where(denom >= cfg.entropy_floor,
                           (psi - phi) / np.maximum(denom, cfg.entropy_floor),
                           0.0)
        out = rhs0 - alpha_k[:, :, None, None, None] * (corr_x + corr_y)
        if diag is not None:
            diag.update(psi=psi, phi=phi, alpha_k=alpha_k, denom=denom)
        return out

    def _face_bathymetry_x(self):
        b = np.empty((self.mesh.nx + 1, self.mesh.ny, self.basis.n_nodes))
        b[:-1] = self.b_nodes[:, :, 0, :]
        b[-1] = self.b_nodes[-1, :, -1, :]
        return b

    def _face_bathymetry_y(self):
        b = np.empty((self.mesh.nx, self.mesh.ny + 1, self.basis.n_nodes))
        b[:, :-1] = self.b_nodes[:, :, :, 0]
        b[:, -1] = self.b_nodes[:, -1, :, -1]
        return b

    # -- time integration -----------------------------------------------------

    def _check_admissible(self, U, t, step):
        if not np.all(np.isfinite(U)):
            raise SolverAbort("non-finite state", t, step)
        if np.any(U[..., 0] <= 0.0):
            bad = np.argwhere(U[..., 0] <= 0.0)[0]
            raise SolverAbort(
                f"non-positive depth at element ({bad[0]}, {bad[1]})", t, step)

    def max_dt(self, U) -> float:
        sx = float(np.max(max_wave_speed(U, self.params.g, "x")))
        sy = float(np.max(max_wave_speed(U, self.params.g, "y")))
        rate = sx / self.mesh.hx + sy / self.mesh.hy
        return self.config.cfl_value() / ((2 * self.config.p + 1) * rate)

    def total_entropy(self, U) -> float:
        w = self.basis.weights
        eta, _ = entropy_pair(U, self.b_nodes, self.params.g,
                              self.config.entropy_mode)
        return float(self.mesh.hx * self.mesh.hy
                     * np.einsum("i,j,abij->", w, w, eta))

    def step(self, U, t, dt, step_index=0):
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
            stages.append(self.rhs(Us, ts))
            df_stage[s] = float(self._friction_dissipation(Us).sum())
        U_new = U + dt * sum(b[s] * stages[s] for s in range(n_stage))
        return U_new, float(dt * (b * df_stage).sum())

    def run(self, U0, t_final: float, t0: float = 0.0,
            snapshot_times: Sequence[float] = (),
            max_steps: Optional[int] = None) -> RunResult:
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
        n_steps = 0
        budget = max_steps if max_steps is not None else 10_000_000
        while t < t_final - tiny:
            dt = self.max_dt(U)
            target = pending[0] if pending else t_final
            if t + dt > target:
                dt = target - t
            if dt <= tiny:
                raise SolverAbort("time step collapsed", t, n_steps)
            U, df = self.step(U, t, dt, n_steps)
            fr_int += df
            t += dt
            n_steps += 1
            times.append(t)
            ent.append(self.total_entropy(U))
            ntot.append(ent[-1] + fr_int)
            if pending and t >= pending[0] - tiny:
                snapshots.append((pending.pop(0), U.copy()))
            if n_steps >= budget:
                raise SolverAbort("step budget exhausted", t, n_steps)
        return RunResult(U=U, t=t, n_steps=n_steps, times=np.array(times),
                         total_entropy=np.array(ent), n_tot=np.array(ntot),
                         snapshots=snapshots)


def directional_steady_solution(mesh: Mesh2D, basis: GLBasis, spec,
                                params: PhysParams, direction: str = "x",
                                source_variant: str = "modified") -> np.ndarray:
    """Tile the 1D discrete global-flux steady state along one direction.

    The 1D solve runs along ``direction`` with the transverse coordinate
    dropped (the bathymetry must not vary transversally).  For ``"y"`` the
    momentum components swap and the rotation parameter flips sign, because
    the along-march Coriolis coupling acts with the opposite orientation.
    """
    from .equilibria import discrete_global_flux_solution
    from .solver_core import Mesh1D

    if direction not in ("x", "y"):
        raise ValueError(f"unknown direction {direction!r}")
    if direction == "x":
        edges = mesh.x_edges
        n_line = mesh.nx

        def b_line(x):
            return params.b(x, np.full_like(x, mesh.y_edges[0]))
    else:
        edges = mesh.y_edges
        n_line = mesh.ny

        def b_line(y):
            return params.b(np.full_like(y, mesh.x_edges[0]), y)

    omega = params.omega
    if callable(omega):
        raise ValueError("directional steady tiling needs constant omega")
    params_1d = PhysParams(g=params.g, c_f=params.c_f,
                           omega=(omega if direction == "x" else -omega),
                           b=b_line, db=None)
    mesh_1d = Mesh1D(edges[0], edges[-1], n_line, basis)
    sol = discrete_global_flux_solution(mesh_1d, basis, spec, params_1d,
                                        source_variant=source_variant)
    n = basis.n_nodes
    U = np.empty((mesh.nx, mesh.ny, n, n, 3))
    if direction == "x":
        U[..., 0] = sol.U[:, None, :, None, 0]
        U[..., 1] = sol.U[:, None, :, None, 1]
        U[..., 2] = sol.U[:, None, :, None, 2]
    else:
        U[..., 0] = sol.U[None, :, None, :, 0]
        U[..., 1] = sol.U[None, :, None, :, 2]   # transverse momentum
        U[..., 2] = sol.U[None, :, None, :, 1]   # along-march momentum
    return U
