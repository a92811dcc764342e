"""Tests for the 1D semidiscrete operator and time loop.

Structural identities are the main oracles here:

  * constant states (flat and sloped bottom) must be fixed points of the
    right-hand side;
  * the interface penalties telescope, so the mass rate vanishes on
    periodic meshes regardless of the state;
  * with the correction enabled, every right-hand-side evaluation balances
    each element's entropy rate against its flux target exactly;
  * discrete steady states produced by ``equilibria`` are fixed points of
    the global-flux operator.
"""

import numpy as np
import pytest

from balance_dg.equilibria import (
    SteadySpec,
    discrete_global_flux_solution,
    steady_field,
)
from balance_dg.physics import PhysParams, flux_x
from balance_dg.quadrature import build_basis
from balance_dg.solver_core import (
    BoundaryCondition,
    BoundarySpec,
    Mesh1D,
    RunResult,
    SchemeConfig,
    Solver1D,
    SolverAbort,
    butcher_tableau,
    numerical_flux,
    source_flux_increments,
)

G = 9.80665


def parabolic_bump(x):
    x = np.asarray(x, dtype=float)
    return np.where((x > 8.0) & (x < 12.0), 0.2 - 0.05 * (x - 10.0) ** 2, 0.0)


def parabolic_bump_slope(x):
    x = np.asarray(x, dtype=float)
    return np.where((x > 8.0) & (x < 12.0), -0.1 * (x - 10.0), 0.0)


def channel_params(**kw):
    return PhysParams(g=G, b=parabolic_bump, db=parabolic_bump_slope, **kw)


def flat_params(g=G, **kw):
    zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))
    return PhysParams(g=g, b=zero, db=zero, **kw)


def make_solver(p=2, n=16, params=None, boundary=None, **cfg_kw):
    basis = build_basis(p)
    mesh = Mesh1D(0.0, 25.0, n, basis)
    params = params if params is not None else channel_params()
    boundary = boundary if boundary is not None else BoundarySpec.all_periodic()
    config = SchemeConfig(p=p, **cfg_kw)
    return Solver1D(mesh, config, params, boundary)


def smooth_ripple_state(mesh, amplitude=0.1):
    """Periodic, admissible, non-steady state over the 25 m channel."""
    x = mesh.nodes
    h = 2.0 - parabolic_bump(x) + amplitude * np.sin(2.0 * np.pi * x / 25.0)
    hu = 0.5 * h * np.cos(2.0 * np.pi * x / 25.0)
    hv = 0.2 * h * np.sin(4.0 * np.pi * x / 25.0)
    return np.stack([h, hu, hv], axis=-1)


# ----------------------------------------------------------------------
# interface flux and source increments
# ----------------------------------------------------------------------


def test_numerical_flux_consistency():
    u = np.array([1.7, 0.9, -0.4])
    g_val = flux_x(u, G)
    np.testing.assert_array_equal(numerical_flux(u, u, g_val, g_val, G), g_val)


def test_numerical_flux_central_mean():
    um = np.array([1.0, 0.3, 0.0])
    up = np.array([2.0, -0.5, 0.1])
    gm, gp = flux_x(um, G), flux_x(up, G)
    got = numerical_flux(um, up, gm, gp, G, alpha=0.5, dissipation="none")
    np.testing.assert_allclose(got, 0.5 * (gm + gp), atol=1e-15)


def test_numerical_flux_still_water_jump():
    # depths 1 and 2 at rest, g = 1: wave speed sqrt(2), mean mass flux 0,
    # so the dissipative jump term alone sets the mass component
    um = np.array([1.0, 0.0, 0.0])
    up = np.array([2.0, 0.0, 0.0])
    got = numerical_flux(um, up, flux_x(um, 1.0), flux_x(up, 1.0), 1.0)
    assert got[0] == pytest.approx(-np.sqrt(2.0) / 2.0, abs=1e-14)
    assert got[1] == pytest.approx(0.5 * (0.5 + 2.0), abs=1e-14)
    assert got[2] == 0.0


def test_numerical_flux_upwind_weight():
    um = np.array([1.0, 0.3, 0.0])
    up = np.array([2.0, -0.5, 0.1])
    gm, gp = flux_x(um, G), flux_x(up, G)
    got = numerical_flux(um, up, gm, gp, G, alpha=0.25, dissipation="none")
    np.testing.assert_allclose(got, 0.25 * gp + 0.75 * gm, atol=1e-15)


def test_source_increments_zero_without_sources():
    solver = make_solver(params=flat_params())
    U = np.broadcast_to([2.0, 1.0, 0.0], solver.mesh.nodes.shape + (3,)).copy()
    R = source_flux_increments(U, solver.mesh, solver.basis, solver.params)
    np.testing.assert_array_equal(R, 0.0)


def test_source_increments_trapezoid_row():
    # p=1 on one unit element: offsets are (0, (S_0+S_1)/2) per component
    basis = build_basis(1)
    mesh = Mesh1D(0.0, 1.0, 1, basis)
    params = flat_params(g=1.0, c_f=0.5)
    U = np.array([[[1.0, 2.0, 0.0], [1.0, 4.0, 0.0]]])
    R = source_flux_increments(U, mesh, basis, params, "modified")
    # S = (0, -c_f hu, 0) = (0, -1, 0) and (0, -2, 0)
    np.testing.assert_allclose(R[0, 0], 0.0, atol=1e-15)
    np.testing.assert_allclose(R[0, 1], [0.0, -1.5, 0.0], atol=1e-14)


def test_source_increments_polynomial_exactness():
    # friction source linear in hu: nodal-degree-p integrand is integrated
    # exactly, matching the analytic primitive
    p = 3
    basis = build_basis(p)
    mesh = Mesh1D(0.0, 2.0, 1, basis)
    params = flat_params(g=1.0, c_f=1.0)
    x = mesh.nodes
    U = np.stack([np.ones_like(x), x ** p, np.zeros_like(x)], axis=-1)
    R = source_flux_increments(U, mesh, basis, params, "modified")
    exact = -(x ** (p + 1)) / (p + 1)
    np.testing.assert_allclose(R[..., 1], exact, atol=1e-13)


def test_butcher_tableaus_are_consistent():
    for name, order in (("ssprk33", 3), ("rk44", 4)):
        A, b, c = butcher_tableau(name)
        assert b.sum() == pytest.approx(1.0, abs=1e-15)
        np.testing.assert_allclose(A.sum(axis=1), c, atol=1e-15)
        # order-2 condition sum b c = 1/2; order-3 condition sum b c^2 = 1/3
        assert (b * c).sum() == pytest.approx(0.5, abs=1e-15)
        assert (b * c ** 2).sum() == pytest.approx(1.0 / 3.0, abs=1e-15)
        if order == 4:
            assert (b * c ** 3).sum() == pytest.approx(0.25, abs=1e-15)


def test_integrator_choice_follows_degree():
    assert SchemeConfig(p=1).integrator_name() == "ssprk33"
    assert SchemeConfig(p=2).integrator_name() == "ssprk33"
    assert SchemeConfig(p=3).integrator_name() == "rk44"
    assert SchemeConfig(p=2, time_integrator="rk44").integrator_name() == "rk44"


# ----------------------------------------------------------------------
# mesh and boundary plumbing
# ----------------------------------------------------------------------


def test_mesh_shares_interface_nodes_bitwise():
    basis = build_basis(3)
    mesh = Mesh1D(0.0, 25.0, 40, basis)
    assert mesh.h_elem == pytest.approx(0.625)
    np.testing.assert_array_equal(mesh.nodes[:-1, -1], mesh.nodes[1:, 0])
    assert mesh.nodes[0, 0] == 0.0 and mesh.nodes[-1, -1] == 25.0


def test_reflective_ghost_flips_normal_momentum():
    bc = BoundaryCondition.reflective()
    ghost = bc.ghost(np.array([2.0, 3.0, 1.5]), 0.0)
    np.testing.assert_array_equal(ghost, [2.0, -3.0, 1.5])


def test_dirichlet_ghost_constant_and_callable():
    bc = BoundaryCondition.dirichlet(np.array([1.0, 2.0, 3.0]))
    np.testing.assert_array_equal(bc.ghost(np.zeros(3), 7.0), [1.0, 2.0, 3.0])
    bc_t = BoundaryCondition.dirichlet(lambda t: np.array([t, 0.0, 0.0]))
    np.testing.assert_array_equal(bc_t.ghost(np.zeros(3), 7.0), [7.0, 0.0, 0.0])


def test_boundary_spec_rejects_mixed_periodic():
    with pytest.raises(ValueError):
        BoundarySpec(BoundaryCondition.periodic(),
                     BoundaryCondition.reflective())


def test_config_validation_errors():
    with pytest.raises(ValueError):
        SchemeConfig(quadrature_mode="upwind").validate()
    with pytest.raises(ValueError):
        SchemeConfig(entropy_correction="global_flux_flux",
                     quadrature_mode="standard").validate()
    with pytest.raises(ValueError):
        SchemeConfig(flux_alpha=1.5).validate()
    with pytest.raises(ValueError):
        SchemeConfig(cfl=0.0).validate()


# ----------------------------------------------------------------------
# fixed points of the right-hand side
# ----------------------------------------------------------------------


@pytest.mark.parametrize("mode", ["standard", "global_flux"])
def test_free_stream_is_fixed_point(mode):
    solver = make_solver(params=flat_params(), quadrature_mode=mode)
    U = np.broadcast_to([1.7, 2.3, -0.4],
                        solver.mesh.nodes.shape + (3,)).copy()
    assert np.max(np.abs(solver.rhs(U))) <= 1e-13


def test_lake_at_rest_is_fixed_point():
    solver = make_solver(n=50)
    spec = SteadySpec(family="lake_at_rest", zeta0=2.0)
    U = steady_field(spec, solver.mesh.nodes, solver.params)
    bc = BoundarySpec.dirichlet(U[0, 0].copy(), U[-1, -1].copy())
    solver = Solver1D(solver.mesh, solver.config, solver.params, bc)
    assert np.max(np.abs(solver.rhs(U))) <= 1e-12


def test_lake_at_rest_standard_quadrature_is_not_balanced():
    spec = SteadySpec(family="lake_at_rest", zeta0=2.0)
    solver = make_solver(n=50, quadrature_mode="standard",
                         source_variant="basic")
    U = steady_field(spec, solver.mesh.nodes, solver.params)
    assert np.max(np.abs(solver.rhs(U))) > 1e-4


@pytest.mark.parametrize("p", [2, 3])
def test_discrete_steady_is_fixed_point(p):
    spec = SteadySpec(family="moving", q0=4.42, E0=22.05535, branch="sub")
    solver = make_solver(p=p, n=25)
    sol = discrete_global_flux_solution(solver.mesh, solver.basis, spec,
                                        solver.params)
    bc = BoundarySpec.dirichlet(sol.U[0, 0].copy(), sol.U[-1, -1].copy())
    solver = Solver1D(solver.mesh, solver.config, solver.params, bc)
    assert np.max(np.abs(solver.rhs(sol.U))) <= 2e-12


def test_discrete_steady_fixed_point_with_correction():
    spec = SteadySpec(family="moving", q0=4.42, E0=22.05535, branch="sub")
    solver = make_solver(n=25, entropy_correction="global_flux_flux")
    sol = discrete_global_flux_solution(solver.mesh, solver.basis, spec,
                                        solver.params)
    bc = BoundarySpec.dirichlet(sol.U[0, 0].copy(), sol.U[-1, -1].copy())
    solver = Solver1D(solver.mesh, solver.config, solver.params, bc)
    assert np.max(np.abs(solver.rhs(sol.U))) <= 2e-12


# ----------------------------------------------------------------------
# conservation
# ----------------------------------------------------------------------


@pytest.mark.parametrize("mode,corr", [
    ("standard", "off"),
    ("global_flux", "off"),
    ("global_flux", "global_flux_flux"),
    ("global_flux", "analytical_flux"),
])
def test_periodic_mass_rate_is_zero(mode, corr):
    solver = make_solver(quadrature_mode=mode, entropy_correction=corr)
    U = smooth_ripple_state(solver.mesh)
    rate = solver.rhs(U)
    w = solver.basis.weights
    mass_rate = solver.mesh.h_elem * np.einsum("i,ei->", w, rate[..., 0])
    assert abs(mass_rate) <= 1e-11


def test_run_conserves_mass_periodic():
    solver = make_solver()
    U0 = smooth_ripple_state(solver.mesh)
    w = solver.basis.weights
    mass0 = solver.mesh.h_elem * np.einsum("i,ei->", w, U0[..., 0])
    result = solver.run(U0, 0.25)
    mass1 = solver.mesh.h_elem * np.einsum("i,ei->", w, result.U[..., 0])
    assert abs(mass1 - mass0) <= 1e-11 * abs(mass0)
    assert result.n_steps > 5


# ----------------------------------------------------------------------
# entropy correction identities
# ----------------------------------------------------------------------


def jumpy_state(mesh, seed=3):
    """Ripple state with independent per-element noise, so faces carry jumps."""
    rng = np.random.default_rng(seed)
    U = smooth_ripple_state(mesh)
    return U * (1.0 + 1e-3 * rng.standard_normal(U.shape))


@pytest.mark.parametrize("corr", ["analytical_flux", "global_flux_flux"])
def test_elementwise_entropy_balance(corr):
    solver = make_solver(entropy_correction=corr,
                         params=channel_params(c_f=0.02))
    U = jumpy_state(solver.mesh)
    diag = {}
    solver.rhs(U, diag=diag)
    # each element's entropy rate matches its flux target exactly
    np.testing.assert_allclose(diag["deta_dt"], -diag["psi"],
                               rtol=0.0, atol=1e-11)
    assert np.max(np.abs(diag["alpha_k"])) > 1e-3  # correction really active


def test_global_entropy_conservation_periodic_frictionless():
    # the analytic entropy-flux target telescopes over a periodic mesh when
    # the state is continuous, so the total entropy rate vanishes
    solver = make_solver(entropy_correction="analytical_flux")
    U = smooth_ripple_state(solver.mesh)
    diag = {}
    solver.rhs(U, diag=diag)
    assert abs(diag["deta_dt"].sum()) <= 1e-11


def test_global_entropy_rate_equals_friction_dissipation():
    solver = make_solver(entropy_correction="analytical_flux",
                         params=channel_params(c_f=0.05))
    U = smooth_ripple_state(solver.mesh)
    diag = {}
    solver.rhs(U, diag=diag)
    total_rate = diag["deta_dt"].sum()
    total_dissipation = diag["d_f"].sum()
    assert total_dissipation > 0.0
    assert abs(total_rate + total_dissipation) <= 1e-11 * total_dissipation


def test_gff_correction_inactive_on_continuous_steady():
    spec = SteadySpec(family="moving", q0=4.42, E0=22.05535, branch="sub")
    solver = make_solver(n=25, entropy_correction="global_flux_flux")
    sol = discrete_global_flux_solution(solver.mesh, solver.basis, spec,
                                        solver.params)
    bc = BoundarySpec.dirichlet(sol.U[0, 0].copy(), sol.U[-1, -1].copy())
    solver = Solver1D(solver.mesh, solver.config, solver.params, bc)
    diag = {}
    solver.rhs(sol.U, diag=diag)
    assert np.max(np.abs(diag["alpha_k"])) <= 1e-10


def test_analytical_correction_active_on_continuous_state():
    # unlike the global-flux variant, the analytic target already deviates
    # on continuous non-steady data (volume quadrature defect)
    solver = make_solver(entropy_correction="analytical_flux")
    U = smooth_ripple_state(solver.mesh)
    diag = {}
    solver.rhs(U, diag=diag)
    assert np.max(np.abs(diag["alpha_k"])) > 1e-5


def test_gff_correction_inactive_on_any_continuous_state():
    solver = make_solver(entropy_correction="global_flux_flux")
    U = smooth_ripple_state(solver.mesh)
    diag = {}
    solver.rhs(U, diag=diag)
    assert np.max(np.abs(diag["alpha_k"])) <= 1e-10


# ----------------------------------------------------------------------
# time loop behaviour
# ----------------------------------------------------------------------


def test_max_dt_formula():
    solver = make_solver(p=2, cfl=0.4)
    U = smooth_ripple_state(solver.mesh)
    from balance_dg.physics import max_wave_speed
    smax = float(np.max(max_wave_speed(U, G)))
    expected = 0.4 * solver.mesh.h_elem / (5.0 * smax)
    assert solver.max_dt(U) == pytest.approx(expected, rel=1e-14)


def test_run_hits_snapshot_times_exactly():
    solver = make_solver()
    U0 = smooth_ripple_state(solver.mesh, amplitude=0.02)
    result = solver.run(U0, 0.2, snapshot_times=(0.05, 0.13))
    assert [t for t, _ in result.snapshots] == [0.05, 0.13]
    assert result.t == 0.2
    assert result.times[0] == 0.0 and result.times[-1] == 0.2
    assert np.all(np.diff(result.times) > 0.0)
    assert result.total_entropy.shape == result.times.shape
    assert result.n_tot.shape == result.times.shape


def test_n_tot_equals_entropy_without_friction():
    solver = make_solver()
    U0 = smooth_ripple_state(solver.mesh, amplitude=0.02)
    result = solver.run(U0, 0.1)
    np.testing.assert_array_equal(result.n_tot, result.total_entropy)


def test_n_tot_adds_friction_dissipation():
    solver = make_solver(params=channel_params(c_f=0.05))
    U0 = smooth_ripple_state(solver.mesh, amplitude=0.02)
    result = solver.run(U0, 0.1)
    assert np.all(result.n_tot[1:] > result.total_entropy[1:])


def test_run_aborts_on_dry_state():
    solver = make_solver(params=flat_params())
    U0 = np.broadcast_to([1.0, 0.0, 0.0],
                         solver.mesh.nodes.shape + (3,)).copy()
    U0[3, 1, 0] = -0.1
    with pytest.raises(SolverAbort) as err:
        solver.run(U0, 0.1)
    assert err.value.t == 0.0
    assert err.value.step == 0


def test_run_result_type():
    solver = make_solver()
    result = solver.run(smooth_ripple_state(solver.mesh, 0.01), 0.02)
    assert isinstance(result, RunResult)
