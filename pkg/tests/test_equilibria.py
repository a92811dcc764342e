"""Tests for analytic steady families and their discrete counterparts.

Oracles:
  * depth roots are checked against the defining algebraic relations
    (energy/Froude identities), not against the solver's own residual;
  * the friction profile is cross-checked by integrating the depth ODE
    h'(x) = -(c_f q0 / h + g b') / (g - q0^2/h^3) with ``scipy``;
  * discrete steady states are validated through structural identities
    (nodal continuity, flux telescoping) and by agreement between the two
    independent constructions (per-element Newton vs. collocation march).
"""

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from balance_dg.equilibria import (
    BelowCriticalEnergy,
    SteadySpec,
    critical_depth,
    discrete_global_flux_solution,
    lobatto_iiia_flux_march,
    solve_depth_from_energy,
    source_primitive_nodal,
    steady_field,
)
from balance_dg.physics import PhysParams, flux_x
from balance_dg.quadrature import build_basis
from balance_dg.solver_core import Mesh1D, bath_interpolant_data

G = 9.80665


def parabolic_bump(x):
    x = np.asarray(x, dtype=float)
    return np.where((x > 8.0) & (x < 12.0), 0.2 - 0.05 * (x - 10.0) ** 2, 0.0)


def parabolic_bump_slope(x):
    x = np.asarray(x, dtype=float)
    return np.where((x > 8.0) & (x < 12.0), -0.1 * (x - 10.0), 0.0)


def channel_params(**kw):
    return PhysParams(g=G, b=parabolic_bump, db=parabolic_bump_slope, **kw)


SUB = SteadySpec(family="moving", q0=4.42, E0=22.05535, branch="sub")
SUPER = SteadySpec(family="moving", q0=4.42, E0=28.8971, branch="super")


# ----------------------------------------------------------------------
# depth solves
# ----------------------------------------------------------------------


def test_critical_depth_is_unit_froude():
    hc = critical_depth(4.42, G)
    # Froude = u / sqrt(g h) = 1  <=>  q^2 = g h^3
    assert abs(4.42 ** 2 - G * hc ** 3) < 1e-12
    assert hc == pytest.approx(1.2583, abs=1e-4)


def test_subcritical_depth_anchor():
    # E0 = g*2 + q0^2/(2*2^2) exactly, so the subcritical root at b=0 is h=2
    h = solve_depth_from_energy(4.42, 22.05535, 0.0, G, "sub")
    assert h == pytest.approx(2.0, abs=1e-12)


def test_supercritical_depth_anchor():
    h = solve_depth_from_energy(4.42, 28.8971, 0.0, G, "super")
    assert h == pytest.approx(0.66, abs=1e-5)


@pytest.mark.parametrize("branch", ["sub", "super"])
def test_depth_satisfies_energy_relation(branch):
    rng = np.random.default_rng(7)
    for _ in range(50):
        q0 = rng.uniform(0.5, 8.0)
        b = rng.uniform(0.0, 0.3)
        hc = critical_depth(q0, G)
        e_crit = G * b + 1.5 * G * hc
        E0 = e_crit + rng.uniform(0.1, 15.0)
        h = solve_depth_from_energy(q0, E0, b, G, branch)
        assert abs(G * (h + b) + 0.5 * q0 ** 2 / h ** 2 - E0) < 1e-10
        froude = q0 / (h * np.sqrt(G * h))
        assert (froude < 1.0) == (branch == "sub")


def test_depth_below_critical_energy_raises():
    # E_crit at b=0.2 for q0=4.42 is about 20.47
    with pytest.raises(BelowCriticalEnergy):
        solve_depth_from_energy(4.42, 20.0, 0.2, G, "sub")


# ----------------------------------------------------------------------
# analytic steady families
# ----------------------------------------------------------------------


def test_lake_at_rest_field():
    spec = SteadySpec(family="lake_at_rest", zeta0=2.0)
    x = np.linspace(0.0, 25.0, 301)
    U = steady_field(spec, x, channel_params())
    np.testing.assert_allclose(U[..., 0] + parabolic_bump(x), 2.0, atol=1e-14)
    assert np.all(U[..., 1] == 0.0)
    assert np.all(U[..., 2] == 0.0)


@pytest.mark.parametrize("spec", [SUB, SUPER], ids=["sub", "super"])
def test_moving_family_invariants(spec):
    x = np.linspace(0.0, 25.0, 407)
    U = steady_field(spec, x, channel_params())
    h, hu = U[..., 0], U[..., 1]
    np.testing.assert_allclose(hu, spec.q0, atol=1e-12)
    energy = G * (h + parabolic_bump(x)) + 0.5 * (hu / h) ** 2
    np.testing.assert_allclose(energy, spec.E0, atol=1e-10)
    assert np.all(U[..., 2] == 0.0)


def test_transcritical_family_crosses_at_crest():
    hc = critical_depth(1.53, G)
    e_crit = G * 0.2 + 1.5 * G * hc
    spec = SteadySpec(family="moving", q0=1.53, E0=e_crit,
                      branch="transcritical", x_crit=10.0)
    x = np.linspace(0.0, 25.0, 801)
    U = steady_field(spec, x, channel_params())
    h = U[..., 0]
    froude = 1.53 / (h * np.sqrt(G * h))
    assert np.all(froude[x < 9.99] < 1.0 + 1e-9)
    assert np.all(froude[x > 10.01] > 1.0 - 1e-9)
    energy = G * (h + parabolic_bump(x)) + 0.5 * (1.53 / h) ** 2
    np.testing.assert_allclose(energy, e_crit, atol=1e-9)
    # double root of the energy cubic: machine-precision energy only pins
    # the depth to ~sqrt(eps)
    h_at_crest = steady_field(spec, np.array([10.0]), channel_params())[0, 0]
    assert h_at_crest == pytest.approx(hc, abs=1e-7)


@pytest.mark.parametrize("branch,E0,c_f",
                         [("sub", 22.05535, 0.03), ("super", 28.8971, 0.05)])
def test_friction_profile_against_ode_oracle(branch, E0, c_f):
    spec = SteadySpec(family="friction", q0=4.42, E0=E0, branch=branch)
    params = channel_params(c_f=c_f)
    x = np.linspace(0.0, 25.0, 41)
    U = steady_field(spec, x, params)

    def depth_rate(s, h):
        num = -c_f * 4.42 / h[0] - G * parabolic_bump_slope(s)
        return [num / (G - 4.42 ** 2 / h[0] ** 3)]

    sol = solve_ivp(depth_rate, (x[0], x[-1]), [U[0, 0]], t_eval=x,
                    rtol=1e-12, atol=1e-13, dense_output=False)
    np.testing.assert_allclose(U[:, 0], sol.y[0], atol=1e-8)
    np.testing.assert_allclose(U[:, 1], 4.42, atol=1e-12)


def test_friction_energy_decays_downstream():
    spec = SteadySpec(family="friction", q0=4.42, E0=22.05535,
                      branch="sub")
    params = channel_params(c_f=0.03)
    x = np.linspace(0.0, 25.0, 201)
    U = steady_field(spec, x, params)
    energy = G * (U[:, 0] + parabolic_bump(x)) + 0.5 * (4.42 / U[:, 0]) ** 2
    assert energy[0] == pytest.approx(22.05535, abs=1e-10)
    assert np.all(np.diff(energy) < 0.0)
    assert energy[-1] == pytest.approx(20.247, abs=1e-2)


def coriolis_rest_setup():
    params = PhysParams(g=1.0, omega=2.0, b=lambda x: np.zeros_like(x),
                        db=lambda x: np.zeros_like(x))
    v_profile = lambda x: 0.5 * x * np.exp(-(x ** 2))
    v_antideriv = lambda x: -0.5 * np.exp(-(x ** 2))
    spec = SteadySpec(family="coriolis_rest", zeta0=2.0, x_start=-5.0,
                      v_profile=v_profile, v_antideriv=v_antideriv)
    return spec, params, v_profile, v_antideriv


def test_coriolis_rest_anchor_value():
    spec, params, _, _ = coriolis_rest_setup()
    h0 = steady_field(spec, np.array([0.0]), params)[0, 0]
    assert h0 == pytest.approx(2.0 + 0.5 * (1.0 - np.exp(-25.0)), abs=1e-13)


def test_coriolis_rest_family_invariants():
    spec, params, v_profile, v_antideriv = coriolis_rest_setup()
    x = np.linspace(-5.0, 5.0, 301)
    U = steady_field(spec, x, params)
    assert np.all(U[:, 1] == 0.0)
    np.testing.assert_allclose(U[:, 2], U[:, 0] * v_profile(x), atol=1e-13)
    # u = 0 balance: g d(h+b)/dx = -omega v, i.e. g*zeta + Omega constant
    const = U[:, 0] + v_antideriv(x)
    np.testing.assert_allclose(const, const[0], atol=1e-12)


def coriolis_moving_setup():
    params = PhysParams(
        g=1.0, omega=1.0,
        b=lambda x: -0.5 * x ** 2 - np.exp(2.0 * x) - 0.5 * np.exp(-4.0 * x),
        db=lambda x: -x - 2.0 * np.exp(2.0 * x) + 2.0 * np.exp(-4.0 * x))
    spec = SteadySpec(
        family="manufactured",
        h_closure=lambda x: np.exp(2.0 * x),
        hu_closure=lambda x: np.ones_like(x),
        hv_closure=lambda x: x * np.exp(2.0 * x))
    return spec, params


def test_coriolis_moving_satisfies_steady_momentum_ode():
    # finite-difference check of d/dx(h u^2 + g h^2/2) = -g h b' - omega h v
    spec, params = coriolis_moving_setup()
    x = np.linspace(0.05, 0.95, 1201)
    U = steady_field(spec, x, params)
    h, hu, hv = U[:, 0], U[:, 1], U[:, 2]
    momentum_flux = hu ** 2 / h + 0.5 * params.g * h ** 2
    lhs = np.gradient(momentum_flux, x, edge_order=2)
    rhs = -params.g * h * params.db(x) - params.omega * hv
    np.testing.assert_allclose(lhs, rhs, rtol=2e-5, atol=1e-5)
    # third component: d/dx(hu v) = +omega h u
    lhs3 = np.gradient(hu * hv / h, x, edge_order=2)
    np.testing.assert_allclose(lhs3, params.omega * hu, rtol=2e-5, atol=1e-5)


# ----------------------------------------------------------------------
# discrete steady states
# ----------------------------------------------------------------------


def make_mesh(p, n, lo=0.0, hi=25.0):
    basis = build_basis(p)
    return Mesh1D(lo, hi, n, basis), basis


@pytest.mark.parametrize("spec", [SUB, SUPER], ids=["sub", "super"])
@pytest.mark.parametrize("p", [1, 2, 3])
def test_discrete_steady_solves_element_systems(spec, p):
    mesh, basis = make_mesh(p, 25)
    params = channel_params()
    sol = discrete_global_flux_solution(mesh, basis, spec, params)
    assert sol.max_residual <= 1e-11
    # interface continuity is built in: shared nodes carry identical states
    np.testing.assert_array_equal(sol.U[:-1, -1, :], sol.U[1:, 0, :])


def test_discrete_steady_global_flux_telescopes():
    mesh, basis = make_mesh(2, 25)
    params = channel_params()
    sol = discrete_global_flux_solution(mesh, basis, SUB, params)
    b_nodes, db_h, dpb_h = bath_interpolant_data(mesh, basis, params)
    for e in range(mesh.n_elements):
        R = source_primitive_nodal(sol.U[e], mesh.nodes[e], mesh.h_elem,
                                   basis, params, "modified",
                                   b_nodes[e], db_h[e], dpb_h[e])
        anchor = flux_x(sol.U[e, 0], G)
        # G = F - R is constant inside the element ...
        for i in range(basis.n_nodes):
            np.testing.assert_allclose(flux_x(sol.U[e, i], G) - R[i],
                                       anchor, atol=1e-11)
        # ... and the next anchor continues the accumulated flux
        if e + 1 < mesh.n_elements:
            np.testing.assert_allclose(flux_x(sol.U[e + 1, 0], G),
                                       anchor + R[-1], atol=1e-11)


def test_discrete_steady_matches_analytic_for_lake_at_rest():
    spec = SteadySpec(family="lake_at_rest", zeta0=2.0)
    mesh, basis = make_mesh(2, 50)
    params = channel_params()
    sol = discrete_global_flux_solution(mesh, basis, spec, params)
    U_ref = steady_field(spec, mesh.nodes, params)
    np.testing.assert_allclose(sol.U, U_ref, atol=1e-13)


def test_discrete_steady_flat_bottom_is_constant():
    params = PhysParams(g=G, b=lambda x: np.zeros_like(x),
                        db=lambda x: np.zeros_like(x))
    mesh, basis = make_mesh(2, 10)
    sol = discrete_global_flux_solution(mesh, basis, SUB, params)
    np.testing.assert_allclose(sol.U[..., 0], 2.0, atol=1e-13)
    np.testing.assert_allclose(sol.U[..., 1], 4.42, atol=1e-13)


@pytest.mark.parametrize("spec,c_f", [
    (SUB, 0.0),
    (SUPER, 0.0),
    (SteadySpec(family="friction", q0=4.42, E0=22.05535,
                branch="sub"), 0.03),
], ids=["sub", "super", "friction"])
def test_march_agrees_with_newton(spec, c_f):
    mesh, basis = make_mesh(2, 50)
    params = channel_params(c_f=c_f)
    newton = discrete_global_flux_solution(mesh, basis, spec, params)
    march = lobatto_iiia_flux_march(mesh, basis, spec, params)
    assert np.max(np.abs(newton.U - march)) <= 1e-10


def test_march_agrees_with_newton_coriolis():
    spec, params = coriolis_moving_setup()
    basis = build_basis(3)
    mesh = Mesh1D(0.0, 1.0, 16, basis)
    newton = discrete_global_flux_solution(mesh, basis, spec, params)
    march = lobatto_iiia_flux_march(mesh, basis, spec, params)
    assert np.max(np.abs(newton.U - march)) <= 1e-10
    assert newton.max_residual <= 1e-11


def test_discrete_steady_superconvergence_subcritical():
    # all-node error order p+2, end-node order 2p (p=3 keeps them distinct)
    params = channel_params()
    errs_all, errs_end = [], []
    for n in (25, 50, 100):
        mesh, basis = make_mesh(3, n)
        sol = discrete_global_flux_solution(mesh, basis, SUB, params)
        U_ref = steady_field(SUB, mesh.nodes, params)
        err = np.abs(sol.U[..., 0] - U_ref[..., 0])
        errs_all.append(err.mean())
        errs_end.append(err[:, [0, -1]].mean())
    slope_all = np.polyfit(np.log([25, 50, 100]), np.log(errs_all), 1)[0]
    slope_end = np.polyfit(np.log([25, 50, 100]), np.log(errs_end), 1)[0]
    assert -slope_all == pytest.approx(5.0, abs=0.5)
    assert -slope_end == pytest.approx(6.0, abs=0.7)


def test_transcritical_discrete_steady_reaches_solver_floor():
    # The sonic-point element admits no exact discrete steady; the solver
    # settles at the least-squares floor there and stays at machine
    # precision elsewhere.
    hc = critical_depth(1.53, G)
    e_crit = G * 0.2 + 1.5 * G * hc
    spec = SteadySpec(family="moving", q0=1.53, E0=e_crit,
                      branch="transcritical", x_crit=10.0)
    mesh, basis = make_mesh(2, 50)
    sol = discrete_global_flux_solution(mesh, basis, spec, params=channel_params())
    assert sol.max_residual <= 2e-5
    U_ref = steady_field(spec, mesh.nodes, channel_params())
    assert np.max(np.abs(sol.U - U_ref)) <= 1e-4


def test_steady_field_raises_below_critical():
    spec = SteadySpec(family="moving", q0=4.42, E0=20.0, branch="sub")
    with pytest.raises(BelowCriticalEnergy):
        steady_field(spec, np.array([10.0]), channel_params())
