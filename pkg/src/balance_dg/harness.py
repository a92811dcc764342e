"""Named benchmark cases and the measurements run on top of them.

The catalog couples geometry, physics, reference states, boundary policy and
perturbation defaults under stable names, so experiments are reproducible
from a case name plus a handful of knobs.  The measurement layer turns those
cases into error tables (:func:`error_norms`), convergence reports with
fitted slopes (:func:`convergence_study`), perturbation responses with a
spurious-noise figure (:func:`perturbation_experiment`), entropy time series
(:func:`entropy_timeseries`) and initialization comparisons
(:func:`initialization_comparison`).  All quantities are SI.

Reference states double as initial data and Dirichlet boundary data.  For
cases marked ``stationary`` (or carrying an analytic steady family) they are
also the exact solution at any time, which is what error norms compare
against.

Concurrency: the independent (degree, resolution) cells of a convergence
study may run on worker threads; report assembly is always serialized, and
results are bit-identical for any worker count because each cell is a pure
function of its inputs.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .equilibria import (
    SteadySpec,
    critical_depth,
    discrete_global_flux_solution,
    steady_field,
)
from .physics import PhysParams
from .quadrature import GLBasis, build_basis
from .solver_core import (
    BoundaryCondition,
    BoundarySpec,
    Mesh1D,
    SchemeConfig,
    Solver1D,
    SolverAbort,
)
from .solver_2d import (
    BoundarySpec2D,
    FaceCondition,
    Mesh2D,
    Solver2D,
    directional_steady_solution,
)

#: errors below this are treated as round-off saturation in slope fits
SATURATION_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# scheme presets
# ---------------------------------------------------------------------------

_SCHEME_PRESETS = {
    # pointwise bathymetry source on plain collocation quadrature: the
    # classical scheme that does not hold discrete steady states
    "nwb": dict(quadrature_mode="standard", source_variant="basic"),
    # flux-integrated sources: well balanced for every catalog family
    "wb": dict(quadrature_mode="global_flux", source_variant="modified"),
    # ... plus the cell entropy correction in either flavour
    "wb_ec_analytic": dict(quadrature_mode="global_flux",
                           source_variant="modified",
                           entropy_correction="analytical_flux"),
    "wb_ec_global": dict(quadrature_mode="global_flux",
                         source_variant="modified",
                         entropy_correction="global_flux_flux"),
}


def scheme_config(kind: str, p: int = 2, **overrides) -> SchemeConfig:
    """A :class:`SchemeConfig` preset by name.

    ``kind`` is one of ``nwb`` (pointwise source, standard quadrature),
    ``wb`` (flux-integrated source), ``wb_ec_analytic`` or ``wb_ec_global``
    (well balanced plus the entropy correction driven by the analytic or the
    flux-integrated entropy flux).  Keyword overrides are applied on top.
    """
    try:
        base = _SCHEME_PRESETS[kind]
    except KeyError:
        known = ", ".join(sorted(_SCHEME_PRESETS))
        raise ValueError(f"unknown scheme {kind!r}; known: {known}") from None
    kw = dict(base, p=p)
    kw.update(overrides)
    return SchemeConfig(**kw).validate()


# ---------------------------------------------------------------------------
# case description
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CaseSpec:
    """One named benchmark: geometry, physics, reference state, defaults.

    ``reference`` evaluates the case's reference state at given nodes; it is
    used for initial data, for Dirichlet boundary data, and - when ``steady``
    is set or ``stationary`` is true - as the exact solution in error norms.
    ``t_final`` is the default horizon of perturbation runs, ``t_accuracy``
    the (usually shorter) horizon of finite-time convergence studies.
    """

    name: str
    dim: int
    domain: tuple                 # (x_l, x_r) or (x_l, x_r, y_l, y_r)
    params: PhysParams
    t_final: float
    steady: Optional[SteadySpec] = None
    initial: Optional[Callable] = None   # x -> U or (x, y) -> U
    stationary: bool = False             # `initial` is an exact steady state
    steady_direction: str = "x"          # march axis of 2D discrete steadies
    bc_x: str = "dirichlet"              # dirichlet | periodic | reflective
    bc_y: str = "dirichlet"
    xi_values: tuple = ()                # customary perturbation amplitudes
    center: tuple = ()                   # perturbation center (x0[, y0])
    pert_width: float = 10.0             # Gaussian width of the perturbation
    t_accuracy: Optional[float] = None
    default_grid: tuple = (50,)
    snapshot_times: tuple = ()

    def reference(self, x, y=None) -> np.ndarray:
        """Nodal reference states (..., 3) at the given coordinates."""
        if self.dim == 2:
            if self.initial is None:
                raise ValueError(f"case {self.name!r} has no reference state")
            return self.initial(np.asarray(x, dtype=float),
                                np.asarray(y, dtype=float))
        if self.steady is not None:
            return steady_field(self.steady, x, self.params)
        if self.initial is None:
            raise ValueError(f"case {self.name!r} has no reference state")
        return self.initial(np.asarray(x, dtype=float))

    @property
    def has_exact_solution(self) -> bool:
        """True when ``reference`` is valid at every time, not just t=0."""
        return self.stationary or (self.dim == 1 and self.steady is not None)


# -- bathymetries and reference closures ------------------------------------


def _parabolic_bump(x):
    x = np.asarray(x, dtype=float)
    return np.where((x > 8.0) & (x < 12.0), 0.2 - 0.05 * (x - 10.0) ** 2, 0.0)


def _parabolic_bump_slope(x):
    x = np.asarray(x, dtype=float)
    return np.where((x > 8.0) & (x < 12.0), -0.1 * (x - 10.0), 0.0)


def _zero_2d(x, y):
    return np.zeros_like(np.asarray(x, dtype=float))


# five parabolic ridges; the windows are closed so that adjacent ridges meet
# at their shared junction value 0.2 - 2.25^2/20 = -0.053125 instead of
# leaving one-point gaps at mesh faces
_RIDGE_CENTERS = tuple(4.5 * k - 0.75 for k in range(1, 6))


def _five_ridge_profile(x):
    x = np.asarray(x, dtype=float)
    b = np.zeros_like(x)
    for c in _RIDGE_CENTERS:
        b = np.where(np.abs(x - c) <= 2.25, 0.2 - (x - c) ** 2 / 20.0, b)
    return b


def _five_ridge_slope(x):
    x = np.asarray(x, dtype=float)
    db = np.zeros_like(x)
    for c in _RIDGE_CENTERS:
        db = np.where(np.abs(x - c) <= 2.25, -(x - c) / 10.0, db)
    return db


def _vortex_surface(r, strength):
    """Piecewise surface elevation of the rotating-vortex balance (g=1, w=1)."""
    r = np.asarray(r, dtype=float)
    s2 = strength ** 2
    s4 = s2 * s2
    inner = 1.0 + (12.5 * s4 + 2.5 * s2) * r ** 2
    rs = np.clip(r, 0.2, None)        # middle branch is only read there
    mid = (1.0 + 0.5 * s4 + 0.1 * s2
           + s4 * (4.0 * np.log(5.0 * rs) - 20.0 * (rs - 0.2)
                   + 12.5 * (rs ** 2 - 0.04))
           + s2 * (2.0 * (rs - 0.2) - 2.5 * (rs ** 2 - 0.04)))
    outer = 1.0 + 0.2 * s2 + (4.0 * math.log(2.0) - 2.0) * s4
    return np.where(r <= 0.2, inner, np.where(r <= 0.4, mid, outer))


def _vortex_swirl(r):
    """Angular-rate profile: solid-body core, 2/r - 5 ring, still far field."""
    r = np.asarray(r, dtype=float)
    rs = np.where(r > 0.0, r, 1.0)
    return np.where(r <= 0.2, 5.0,
                    np.where(r <= 0.4, 2.0 / rs - 5.0, 0.0))


def _vortex_bathymetry(x, y):
    r2 = np.asarray(x, dtype=float) ** 2 + np.asarray(y, dtype=float) ** 2
    return np.where(r2 < 0.16, 0.1 * (1.0 - 6.25 * r2), 0.0)


def _vortex_db_x(x, y):
    x = np.asarray(x, dtype=float)
    r2 = x ** 2 + np.asarray(y, dtype=float) ** 2
    return np.where(r2 < 0.16, -1.25 * x, 0.0)


def _vortex_db_y(x, y):
    y = np.asarray(y, dtype=float)
    r2 = np.asarray(x, dtype=float) ** 2 + y ** 2
    return np.where(r2 < 0.16, -1.25 * y, 0.0)


_VORTEX_STRENGTH = 0.1


def _vortex_state(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = np.hypot(x, y)
    s2 = _VORTEX_STRENGTH ** 2
    ups = _vortex_swirl(r)
    h = _vortex_surface(r, _VORTEX_STRENGTH) - _vortex_bathymetry(x, y)
    u = s2 * y * ups          # clockwise rotation
    v = -s2 * x * ups
    return np.stack([h, h * u, h * v], axis=-1)


def _kelvin_shelf(x, y):
    x = np.asarray(x, dtype=float)
    return np.where(x <= 40.0, 0.0, 0.025 * x - 1.0)


def _kelvin_shelf_slope_x(x, y):
    x = np.asarray(x, dtype=float)
    return np.where(x > 40.0, 0.025, 0.0)


def _kelvin_state(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    bump = 0.8 * np.exp(-((x - 30.0) ** 2 + (y - 6.0) ** 2) / 3.0)
    h = 2.0 - _kelvin_shelf(x, y) + bump
    out = np.zeros(h.shape + (3,))
    out[..., 0] = h
    return out


def _geostrophic_jet(x):
    x = np.asarray(x, dtype=float)
    v = (2.0 * (1.0 + np.tanh(2.0 * x + 2.0)) * (1.0 - np.tanh(2.0 * x - 2.0))
         / (1.0 + math.tanh(2.0)) ** 2)
    out = np.zeros(x.shape + (3,))
    out[..., 0] = 1.0
    out[..., 2] = v
    return out


def _geostrophic_dome(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rho = np.sqrt(2.5 * x ** 2 + y ** 2 / 2.5)
    h = 1.0 + 0.25 * (1.0 - np.tanh((rho - 1.0) / 0.1))
    out = np.zeros(h.shape + (3,))
    out[..., 0] = h
    return out


def _channel_steady_2d(x, y):
    """Bump-channel steady state, constant transversally."""
    return steady_field(_CHANNEL_STEADY, np.asarray(x, dtype=float),
                        _CHANNEL_PARAMS_1D)


_CHANNEL_STEADY = SteadySpec(family="moving", q0=5.6865, E0=54.183738,
                             branch="sub")
_CHANNEL_PARAMS_1D = PhysParams(b=_parabolic_bump, db=_parabolic_bump_slope)


def _build_catalog() -> Dict[str, CaseSpec]:
    cases: Dict[str, CaseSpec] = {}

    def add(case: CaseSpec):
        if case.name in cases:
            raise ValueError(f"duplicate case name {case.name!r}")
        cases[case.name] = case

    bump = dict(b=_parabolic_bump, db=_parabolic_bump_slope)
    g_std = PhysParams().g

    add(CaseSpec(
        name="lake_at_rest", dim=1, domain=(0.0, 25.0),
        params=PhysParams(**bump),
        steady=SteadySpec(family="lake_at_rest", zeta0=2.0),
        t_final=1.5, t_accuracy=2.0,
        xi_values=(1e-1, 1e-3, 1e-5), center=(10.0,)))

    add(CaseSpec(
        name="subcritical", dim=1, domain=(0.0, 25.0),
        params=PhysParams(**bump),
        steady=SteadySpec(family="moving", q0=4.42, E0=22.05535,
                          branch="sub"),
        t_final=1.5, t_accuracy=2.0,
        xi_values=(1e-1, 1e-3), center=(10.0,)))

    add(CaseSpec(
        name="supercritical", dim=1, domain=(0.0, 25.0),
        params=PhysParams(**bump),
        steady=SteadySpec(family="moving", q0=4.42, E0=28.8971,
                          branch="super"),
        t_final=1.5, t_accuracy=2.0,
        xi_values=(2e-2, 1e-5), center=(6.25,)))

    # discharge fixes the crest-critical energy: the profile passes through
    # the critical depth exactly on top of the bump
    e_crit = g_std * (0.2 + 1.5 * critical_depth(1.53, g_std))
    add(CaseSpec(
        name="transcritical", dim=1, domain=(0.0, 25.0),
        params=PhysParams(**bump),
        steady=SteadySpec(family="moving", q0=1.53, E0=e_crit,
                          branch="transcritical", x_crit=10.0),
        t_final=1.5, t_accuracy=2.0,
        xi_values=(1e-1, 1e-3), center=(6.25,)))

    add(CaseSpec(
        name="coriolis_rest", dim=1, domain=(-5.0, 5.0),
        params=PhysParams(g=1.0, omega=2.0),
        steady=SteadySpec(
            family="coriolis_rest", zeta0=2.0, x_start=-5.0,
            v_profile=lambda x: 0.5 * x * np.exp(-(x ** 2)),
            v_antideriv=lambda x: -0.5 * np.exp(-(x ** 2))),
        t_final=2.0, t_accuracy=2.0,
        xi_values=(0.5, 1e-3), center=(0.0,)))

    add(CaseSpec(
        name="coriolis_moving", dim=1, domain=(0.0, 1.0),
        params=PhysParams(
            g=1.0, omega=1.0,
            b=lambda x: (-0.5 * x ** 2 - np.exp(2.0 * x)
                         - 0.5 * np.exp(-4.0 * x)),
            db=lambda x: (-x - 2.0 * np.exp(2.0 * x)
                          + 2.0 * np.exp(-4.0 * x))),
        steady=SteadySpec(
            family="manufactured",
            h_closure=lambda x: np.exp(2.0 * x),
            hu_closure=lambda x: np.ones_like(x),
            hv_closure=lambda x: x * np.exp(2.0 * x)),
        t_final=0.1, t_accuracy=1.0,
        xi_values=(0.5, 1e-4), center=(0.5,), pert_width=10.0))

    add(CaseSpec(
        name="subcritical_friction", dim=1, domain=(0.0, 25.0),
        params=PhysParams(c_f=0.03, **bump),
        steady=SteadySpec(family="friction", q0=4.42, E0=22.05535,
                          branch="sub", x_start=0.0),
        t_final=1.5, t_accuracy=2.0,
        xi_values=(1e-1, 1e-3), center=(10.0,)))

    add(CaseSpec(
        name="supercritical_friction", dim=1, domain=(0.0, 25.0),
        params=PhysParams(c_f=0.05, **bump),
        steady=SteadySpec(family="friction", q0=4.42, E0=28.8971,
                          branch="super", x_start=0.0),
        t_final=1.5, t_accuracy=2.0,
        xi_values=(2e-2, 1e-5), center=(6.25,)))

    add(CaseSpec(
        name="lake_at_rest_2d", dim=2, domain=(0.0, 25.0, 0.0, 25.0),
        params=PhysParams(b=lambda x, y: _five_ridge_profile(x),
                          db=(lambda x, y: _five_ridge_slope(x), _zero_2d)),
        steady=SteadySpec(family="lake_at_rest", zeta0=5.47),
        initial=lambda x, y: np.concatenate(
            [(5.47 - _five_ridge_profile(x))[..., None],
             np.zeros(np.asarray(x, dtype=float).shape + (2,))], axis=-1),
        stationary=True,
        t_final=2.0, t_accuracy=2.0,
        xi_values=(0.05,), center=(10.0, 12.5), pert_width=0.1,
        default_grid=(50, 50)))

    add(CaseSpec(
        name="channel_2d", dim=2, domain=(0.0, 25.0, 0.0, 25.0),
        params=PhysParams(b=lambda x, y: _parabolic_bump(x),
                          db=(lambda x, y: _parabolic_bump_slope(x),
                              _zero_2d)),
        steady=_CHANNEL_STEADY,
        initial=_channel_steady_2d,
        stationary=True, bc_y="reflective",
        t_final=2.0, t_accuracy=2.0,
        xi_values=(0.05,), center=(10.0, 12.5), pert_width=0.1,
        default_grid=(50, 50)))

    add(CaseSpec(
        name="vortex", dim=2, domain=(-1.0, 1.0, -1.0, 1.0),
        params=PhysParams(g=1.0, omega=1.0, b=_vortex_bathymetry,
                          db=(_vortex_db_x, _vortex_db_y)),
        initial=_vortex_state,
        stationary=True,
        t_final=0.05, t_accuracy=0.1,
        xi_values=(1e-3,), center=(0.0, 0.0), pert_width=0.1,
        default_grid=(50, 50)))

    add(CaseSpec(
        name="geostrophic_1d", dim=1, domain=(-10.0, 15.0),
        params=PhysParams(g=1.0, omega=1.0),
        initial=_geostrophic_jet,
        t_final=2.0 * math.pi,
        center=(0.0,), default_grid=(200,),
        snapshot_times=tuple(k * math.pi / 2.0 for k in range(1, 5))))

    add(CaseSpec(
        name="geostrophic_2d", dim=2, domain=(-10.0, 10.0, -10.0, 10.0),
        params=PhysParams(g=1.0, omega=1.0,
                          b=_zero_2d, db=(_zero_2d, _zero_2d)),
        initial=_geostrophic_dome,
        t_final=20.0,
        center=(0.0, 0.0), pert_width=0.1, default_grid=(50, 50),
        snapshot_times=(4.0, 8.0, 12.0, 20.0)))

    add(CaseSpec(
        name="kelvin_front", dim=2, domain=(0.0, 70.0, 0.0, 12.0),
        params=PhysParams(g=1.0, omega=lambda y: np.asarray(y) - 6.0,
                          b=_kelvin_shelf,
                          db=(_kelvin_shelf_slope_x, _zero_2d)),
        initial=_kelvin_state,
        bc_x="reflective", bc_y="reflective",
        t_final=20.0,
        center=(30.0, 6.0), pert_width=0.1, default_grid=(140, 24)))

    return cases


CASES: Dict[str, CaseSpec] = _build_catalog()


def case_names() -> List[str]:
    return list(CASES)


def get_case(case: Union[str, CaseSpec]) -> CaseSpec:
    if isinstance(case, CaseSpec):
        return case
    try:
        return CASES[case]
    except KeyError:
        known = ", ".join(CASES)
        raise ValueError(f"unknown case {case!r}; known: {known}") from None


# ---------------------------------------------------------------------------
# meshes, boundaries, solvers
# ---------------------------------------------------------------------------


def _resolve_grid(case: CaseSpec, n) -> tuple:
    if n is None:
        grid = case.default_grid
    elif np.isscalar(n):
        grid = (int(n),) * case.dim
    else:
        grid = tuple(int(v) for v in n)
    if len(grid) != case.dim:
        raise ValueError(f"case {case.name!r} is {case.dim}D but the grid "
                         f"spec {grid} has {len(grid)} entries")
    return grid


def build_mesh(case: Union[str, CaseSpec], basis: GLBasis, n=None):
    """Mesh over the case domain; ``n`` is elements per direction."""
    case = get_case(case)
    grid = _resolve_grid(case, n)
    if case.dim == 1:
        return Mesh1D(case.domain[0], case.domain[1], grid[0], basis)
    x_l, x_r, y_l, y_r = case.domain
    return Mesh2D(x_l, x_r, y_l, y_r, grid[0], grid[1], basis)


def build_boundary(case: Union[str, CaseSpec], mesh):
    """Boundary spec from the case policy, Dirichlet data from the reference."""
    case = get_case(case)
    if case.dim == 1:
        if case.bc_x == "periodic":
            return BoundarySpec.all_periodic()
        if case.bc_x == "reflective":
            return BoundarySpec(BoundaryCondition.reflective(),
                                BoundaryCondition.reflective())
        if case.bc_x != "dirichlet":
            raise ValueError(f"unknown boundary policy {case.bc_x!r}")
        # evaluate on the full mesh so marched references (friction) see the
        # same abscissae as the solver, then keep the two end states
        U = case.reference(mesh.nodes)
        return BoundarySpec.dirichlet(U[0, 0].copy(), U[-1, -1].copy())

    def face(kind: str, x, y) -> FaceCondition:
        if kind == "periodic":
            return FaceCondition.periodic()
        if kind == "reflective":
            return FaceCondition.reflective()
        if kind != "dirichlet":
            raise ValueError(f"unknown boundary policy {kind!r}")
        return FaceCondition.dirichlet(case.reference(x, y))

    x_l, x_r, y_l, y_r = case.domain
    ny_nodes = mesh.nodes_y
    nx_nodes = mesh.nodes_x
    return BoundarySpec2D(
        left=face(case.bc_x, np.full_like(ny_nodes, x_l), ny_nodes),
        right=face(case.bc_x, np.full_like(ny_nodes, x_r), ny_nodes),
        bottom=face(case.bc_y, nx_nodes, np.full_like(nx_nodes, y_l)),
        top=face(case.bc_y, nx_nodes, np.full_like(nx_nodes, y_r)))


def build_solver(case: Union[str, CaseSpec], mesh, config: SchemeConfig,
                 boundary=None):
    """Solver for the case on the given mesh.

    ``boundary`` may be None (case policy), the string ``"periodic"``, or an
    explicit boundary spec.
    """
    case = get_case(case)
    if boundary is None:
        boundary = build_boundary(case, mesh)
    elif boundary == "periodic":
        if case.dim == 1:
            boundary = BoundarySpec.all_periodic()
        else:
            boundary = BoundarySpec2D(*(FaceCondition.periodic()
                                        for _ in range(4)))
    if case.dim == 1:
        return Solver1D(mesh, config, case.params, boundary)
    return Solver2D(mesh, config, case.params, boundary)


# ---------------------------------------------------------------------------
# error norms and slope fits
# ---------------------------------------------------------------------------


def error_norms(U, exact, mesh, mode: str = "all_nodes") -> np.ndarray:
    """Mean absolute nodal error per variable, shape (3,).

    ``mode`` selects the sample set: every collocation node
    (``"all_nodes"``) or only element endpoints/corners (``"end_nodes"``),
    where one-sided convergence orders differ.  ``exact`` is a coordinate
    closure as in :meth:`CaseSpec.reference`.
    """
    if mode not in ("all_nodes", "end_nodes"):
        raise ValueError(f"mode must be 'all_nodes' or 'end_nodes', "
                         f"got {mode!r}")
    U = np.asarray(U, dtype=float)
    if isinstance(mesh, Mesh2D):
        diff = np.abs(U - exact(mesh.X, mesh.Y))
        if mode == "end_nodes":
            ends = [0, -1]
            diff = diff[:, :, ends][:, :, :, ends]
    else:
        diff = np.abs(U - exact(mesh.nodes))
        if mode == "end_nodes":
            diff = diff[:, [0, -1], :]
    return diff.reshape(-1, 3).mean(axis=0)


@dataclass(frozen=True)
class SlopeFit:
    """Least-squares convergence order over the non-saturated resolutions."""

    order: Optional[float]
    n_used: int
    inconclusive: bool


def fit_order(ns, errors, floor: float = SATURATION_FLOOR) -> SlopeFit:
    """Fit err ~ C * N^-order, excluding values at the round-off floor.

    Needs two usable points for a slope and three for a conclusive one.
    """
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    usable = np.isfinite(errors) & (errors >= floor)
    n_used = int(usable.sum())
    if n_used < 2:
        return SlopeFit(None, n_used, True)
    coeff = np.polyfit(np.log(ns[usable]), np.log(errors[usable]), 1)
    return SlopeFit(float(-coeff[0]), n_used, n_used < 3)


# ---------------------------------------------------------------------------
# convergence studies
# ---------------------------------------------------------------------------


@dataclass
class CellResult:
    """One (degree, resolution) cell of a convergence study."""

    p: int
    n: int
    err_all: Optional[np.ndarray] = None   # (3,) mean |error| per variable
    err_end: Optional[np.ndarray] = None
    saturated_all: bool = False
    saturated_end: bool = False
    failure: Optional[str] = None


@dataclass
class ConvergenceReport:
    case: str
    target: str
    cells: List[CellResult]
    slopes: Dict[int, Dict[str, SlopeFit]]  # p -> mode -> fit (on depth)

    def cell(self, p: int, n: int) -> CellResult:
        for c in self.cells:
            if c.p == p and c.n == n:
                return c
        raise KeyError(f"no cell (p={p}, n={n})")


def convergence_study(case: Union[str, CaseSpec], ps: Sequence[int],
                      ns: Sequence[int], target: str = "steady_solution",
                      config: Optional[SchemeConfig] = None,
                      t_final: Optional[float] = None,
                      n_workers: int = 1) -> ConvergenceReport:
    """Error table plus fitted slopes over a (degree, resolution) matrix.

    ``target`` is ``"steady_solution"`` (the discrete steady state itself is
    compared against the analytic family) or ``"finite_time"`` (the case is
    initialized with the nodal reference and evolved to the accuracy
    horizon).  Failures of individual cells are recorded per cell, never
    raised.  With ``n_workers > 1`` the cells run on a thread pool.
    """
    case = get_case(case)
    if target not in ("steady_solution", "finite_time"):
        raise ValueError(f"unknown target {target!r}")
    if target == "steady_solution" and case.steady is None:
        raise ValueError(f"case {case.name!r} has no analytic steady family")
    if target == "finite_time" and not case.has_exact_solution:
        raise ValueError(f"case {case.name!r} has no reference solution "
                         "valid at t > 0")
    horizon = t_final
    if horizon is None:
        horizon = case.t_accuracy if case.t_accuracy is not None \
            else case.t_final

    def run_cell(p: int, n: int) -> CellResult:
        try:
            basis = build_basis(p)
            mesh = build_mesh(case, basis, n)
            if target == "steady_solution":
                if case.dim == 1:
                    U = discrete_global_flux_solution(
                        mesh, basis, case.steady, case.params).U
                else:
                    U = directional_steady_solution(
                        mesh, basis, case.steady, case.params,
                        case.steady_direction)
            else:
                cfg = replace(config, p=p) if config is not None \
                    else scheme_config("wb", p)
                solver = build_solver(case, mesh, cfg)
                U0 = case.reference(mesh.nodes) if case.dim == 1 \
                    else case.reference(mesh.X, mesh.Y)
                U = solver.run(U0, horizon).U
            err_all = error_norms(U, case.reference, mesh, "all_nodes")
            err_end = error_norms(U, case.reference, mesh, "end_nodes")
            return CellResult(p, n, err_all, err_end,
                              saturated_all=bool(err_all[0] < SATURATION_FLOOR),
                              saturated_end=bool(err_end[0] < SATURATION_FLOOR))
        except Exception as exc:              # recorded, not fatal
            return CellResult(p, n, failure=f"{type(exc).__name__}: {exc}")

    jobs = [(int(p), int(n)) for p in ps for n in ns]
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            futures = {job: pool.submit(run_cell, *job) for job in jobs}
            results = {job: fut.result() for job, fut in futures.items()}
    else:
        results = {job: run_cell(*job) for job in jobs}
    cells = [results[job] for job in jobs]

    slopes: Dict[int, Dict[str, SlopeFit]] = {}
    for p in dict.fromkeys(int(p) for p in ps):
        ok = [c for c in cells if c.p == p and c.failure is None]
        ns_ok = [c.n for c in ok]
        slopes[p] = {
            "all_nodes": fit_order(ns_ok, [c.err_all[0] for c in ok]),
            "end_nodes": fit_order(ns_ok, [c.err_end[0] for c in ok]),
        }
    return ConvergenceReport(case.name, target, cells, slopes)


# ---------------------------------------------------------------------------
# baselines and perturbed runs
# ---------------------------------------------------------------------------


def baseline_state(case: Union[str, CaseSpec], mesh, basis: GLBasis,
                   strategy: str = "analytic") -> np.ndarray:
    """Unperturbed initial state under the given strategy.

    ``"analytic"`` samples the reference at the nodes; ``"wb_discrete"``
    solves for the discrete steady state of the flux-integrated scheme.
    Relaxed baselines of other schemes are produced by
    :func:`initialization_comparison`.
    """
    case = get_case(case)
    if strategy == "analytic":
        if case.dim == 1:
            return case.reference(mesh.nodes)
        return case.reference(mesh.X, mesh.Y)
    if strategy != "wb_discrete":
        raise ValueError(
            f"unknown baseline strategy {strategy!r}; use 'analytic' or "
            "'wb_discrete' (relaxed states come from "
            "initialization_comparison)")
    if case.dim == 1:
        if case.steady is None:
            raise ValueError(f"case {case.name!r} has no steady family to "
                             "solve discretely")
        return discrete_global_flux_solution(mesh, basis, case.steady,
                                             case.params).U
    if case.steady is not None:
        return directional_steady_solution(mesh, basis, case.steady,
                                           case.params, case.steady_direction)
    if case.stationary:
        # genuinely two-dimensional steady data: its nodal samples are the
        # best available discrete proxy
        return case.reference(mesh.X, mesh.Y)
    raise ValueError(f"case {case.name!r} has no steady state")


def perturbation_profile(case: Union[str, CaseSpec], x, y=None, *,
                         xi: float, center=None) -> np.ndarray:
    """Gaussian depth perturbation with the case's customary shape."""
    case = get_case(case)
    c = tuple(center) if center is not None else case.center
    x = np.asarray(x, dtype=float)
    d2 = (x - c[0]) ** 2
    if case.dim == 2:
        d2 = d2 + (np.asarray(y, dtype=float) - c[1]) ** 2
    return xi * np.exp(-d2 / case.pert_width ** 2)


def perturbed_state(case: Union[str, CaseSpec], baseline: np.ndarray, mesh,
                    xi: float, center=None) -> np.ndarray:
    """Baseline with the depth bump added at unchanged velocities."""
    case = get_case(case)
    if xi == 0.0:
        return np.array(baseline, dtype=float)
    if case.dim == 1:
        bump = perturbation_profile(case, mesh.nodes, xi=xi, center=center)
    else:
        bump = perturbation_profile(case, mesh.X, mesh.Y, xi=xi,
                                    center=center)
    U = np.array(baseline, dtype=float)
    h_old = U[..., 0].copy()
    U[..., 0] = h_old + bump
    U[..., 1] *= U[..., 0] / h_old
    U[..., 2] *= U[..., 0] / h_old
    return U


@dataclass
class CaseRun:
    """A solver, its initial data, and the finished run."""

    case: CaseSpec
    config: SchemeConfig
    mesh: object
    solver: object
    baseline: np.ndarray
    U0: np.ndarray
    result: object


def run_case(case: Union[str, CaseSpec], config: Optional[SchemeConfig] = None,
             n=None, *, xi: float = 0.0, center=None,
             t_final: Optional[float] = None, baseline="analytic",
             boundary=None, snapshot_times: Sequence[float] = (),
             max_steps: Optional[int] = None) -> CaseRun:
    """Run one case end to end and return solver, states and result.

    ``baseline`` is a strategy name for :func:`baseline_state` or a
    precomputed nodal array.  ``boundary`` as in :func:`build_solver`.
    """
    case = get_case(case)
    if config is None:
        config = scheme_config("wb", 2)
    basis = build_basis(config.p)
    mesh = build_mesh(case, basis, n)
    solver = build_solver(case, mesh, config, boundary)
    if isinstance(baseline, np.ndarray):
        B = np.array(baseline, dtype=float)
        if B.shape != (mesh.X.shape + (3,) if case.dim == 2
                       else mesh.nodes.shape + (3,)):
            raise ValueError("baseline array does not match the mesh")
    else:
        B = baseline_state(case, mesh, basis, baseline)
    U0 = perturbed_state(case, B, mesh, xi, center)
    horizon = case.t_final if t_final is None else float(t_final)
    result = solver.run(U0, horizon, snapshot_times=snapshot_times,
                        max_steps=max_steps)
    return CaseRun(case, config, mesh, solver, B, U0, result)


# ---------------------------------------------------------------------------
# perturbation experiments
# ---------------------------------------------------------------------------


@dataclass
class SchemeOutcome:
    """One scheme's response to the perturbation experiment."""

    config: SchemeConfig
    run: Optional[CaseRun]
    delta_snapshots: List[Tuple[float, np.ndarray]]  # (t, h - h_baseline)
    spurious_noise: Optional[float]   # max |h(T) - h*| of the xi=0 twin run
    failure: Optional[str] = None


@dataclass
class PerturbationResult:
    case: CaseSpec
    xi: float
    mesh: object
    baseline: np.ndarray
    outcomes: Dict[str, SchemeOutcome]


def perturbation_experiment(case: Union[str, CaseSpec], xi: float,
                            schemes: Optional[Dict[str, SchemeConfig]] = None,
                            *, n=None, p: Optional[int] = None, center=None,
                            t_final: Optional[float] = None,
                            baseline: str = "analytic",
                            boundary=None,
                            snapshot_times: Optional[Sequence[float]] = None
                            ) -> PerturbationResult:
    """Evolve a depth bump under several schemes from a shared baseline.

    Each scheme also runs an unperturbed twin from the same baseline; the
    twin's final depth deviation is that scheme's ``spurious_noise``, the
    background against which the physical signal must be read.  Scheme
    failures are recorded per scheme, never raised.
    """
    case = get_case(case)
    if schemes is None:
        deg = 2 if p is None else p
        schemes = {"nwb": scheme_config("nwb", deg),
                   "wb": scheme_config("wb", deg),
                   "wb_ec": scheme_config("wb_ec_global", deg)}
    degrees = {cfg.p for cfg in schemes.values()}
    if len(degrees) != 1:
        raise ValueError("all schemes of one experiment must share a degree")
    deg = degrees.pop()
    if p is not None and deg != p:
        raise ValueError(f"p={p} does not match the scheme configs (p={deg})")

    horizon = case.t_final if t_final is None else float(t_final)
    if snapshot_times is None:
        snapshot_times = (horizon,)
    basis = build_basis(deg)
    mesh = build_mesh(case, basis, n)
    B = baseline_state(case, mesh, basis, baseline)

    outcomes: Dict[str, SchemeOutcome] = {}
    for label, cfg in schemes.items():
        try:
            main = run_case(case, cfg, n=n, xi=xi, center=center,
                            t_final=horizon, baseline=B, boundary=boundary,
                            snapshot_times=snapshot_times)
            if xi == 0.0:
                twin = main
            else:
                twin = run_case(case, cfg, n=n, xi=0.0, t_final=horizon,
                                baseline=B, boundary=boundary)
            noise = float(np.max(np.abs(twin.result.U[..., 0] - B[..., 0])))
            deltas = [(t, snap[..., 0] - B[..., 0])
                      for t, snap in main.result.snapshots]
            outcomes[label] = SchemeOutcome(cfg, main, deltas, noise)
        except Exception as exc:
            outcomes[label] = SchemeOutcome(cfg, None, [], None,
                                            failure=f"{type(exc).__name__}: "
                                                    f"{exc}")
    return PerturbationResult(case, xi, mesh, B, outcomes)


# ---------------------------------------------------------------------------
# entropy series
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EntropySeries:
    """Entropy record of a run: S(t) and N(t) = S(t) + accumulated friction
    dissipation; N is conserved semi-discretely on periodic domains and
    reduces to S without friction."""

    t: np.ndarray
    total_entropy: np.ndarray
    n_tot: np.ndarray


def entropy_timeseries(result) -> EntropySeries:
    return EntropySeries(np.asarray(result.times, dtype=float).copy(),
                         np.asarray(result.total_entropy, dtype=float).copy(),
                         np.asarray(result.n_tot, dtype=float).copy())


# ---------------------------------------------------------------------------
# initialization comparison
# ---------------------------------------------------------------------------


def relax_to_steady(solver, U0, tol: float = 1e-12,
                    max_steps: int = 200_000, check_every: int = 50):
    """March a solver toward its own fixed point until max|rhs| <= tol.

    Returns ``(U, residual, steps, converged)``.  Non-convergence - budget
    exhaustion or outright divergence of the march - is reported through
    ``converged=False``, not raised; on divergence the last admissible
    checkpoint state is returned with an infinite residual.
    """
    U = np.array(U0, dtype=float)
    t = 0.0
    steps = 0
    residual = float(np.max(np.abs(solver.rhs(U, t))))
    while residual > tol and steps < max_steps:
        checkpoint = U.copy()
        checkpoint_steps = steps
        try:
            for _ in range(min(check_every, max_steps - steps)):
                dt = solver.max_dt(U)
                U, _ = solver.step(U, t, dt, steps)
                t += dt
                steps += 1
        except SolverAbort:
            return checkpoint, float("inf"), checkpoint_steps, False
        residual = float(np.max(np.abs(solver.rhs(U, t))))
    return U, residual, steps, bool(residual <= tol)


@dataclass
class InitComparison:
    """Outcome of one initialization strategy on one case."""

    case: str
    strategy: str
    xi: float
    baseline: np.ndarray
    run: CaseRun
    spurious_noise: float
    relax_residual: Optional[float] = None
    relax_steps: int = 0
    relax_converged: Optional[bool] = None


def initialization_comparison(case: Union[str, CaseSpec], strategy: str,
                              xi: float, *, config: Optional[SchemeConfig] = None,
                              n=None, p: Optional[int] = None, center=None,
                              t_final: Optional[float] = None,
                              relax_tol: float = 1e-12,
                              relax_max_steps: int = 200_000) -> InitComparison:
    """Measure how an initialization strategy behaves under one scheme.

    ``strategy`` is ``"analytic"`` (nodal reference), ``"wb_discrete"`` (the
    flux-integrated scheme's own discrete steady), or ``"nwb_discrete"``
    (pseudo-time relaxation under the pointwise-source scheme; convergence
    failure is reported in the result, not raised).  The returned
    ``spurious_noise`` is the final depth deviation of an unperturbed twin
    run, as in :func:`perturbation_experiment`.
    """
    case = get_case(case)
    if strategy not in ("analytic", "wb_discrete", "nwb_discrete"):
        raise ValueError(f"unknown strategy {strategy!r}; use 'analytic', "
                         "'wb_discrete' or 'nwb_discrete'")
    if config is None:
        config = scheme_config("wb", 2 if p is None else p)
    if p is not None and config.p != p:
        raise ValueError(f"p={p} does not match config.p={config.p}")
    basis = build_basis(config.p)
    mesh = build_mesh(case, basis, n)

    relax_residual = None
    relax_steps = 0
    relax_converged = None
    if strategy == "nwb_discrete":
        relax_solver = build_solver(case, mesh,
                                    scheme_config("nwb", config.p))
        seed = baseline_state(case, mesh, basis, "analytic")
        B, relax_residual, relax_steps, relax_converged = relax_to_steady(
            relax_solver, seed, relax_tol, relax_max_steps)
    else:
        B = baseline_state(case, mesh, basis, strategy)

    main = run_case(case, config, n=n, xi=xi, center=center,
                    t_final=t_final, baseline=B)
    twin = main if xi == 0.0 else run_case(case, config, n=n, xi=0.0,
                                           t_final=t_final, baseline=B)
    noise = float(np.max(np.abs(twin.result.U[..., 0] - B[..., 0])))
    return InitComparison(case.name, strategy, xi, B, main, noise,
                          relax_residual, relax_steps, relax_converged)
