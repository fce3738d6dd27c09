import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from thermoelectric.config import BoundaryData, tangential_flux
from thermoelectric.coupled import (
    IncompatibleCurrentError,
    ProblemSpec,
    bound_ratio,
    harmonic_extension,
    joule_rhs,
    picard_step,
    potential_solve,
    reconstruct_H,
    run_fixed_point,
)
from thermoelectric.elliptic import IncompatibleDataError
from thermoelectric.mesh import (
    ConductivityModel,
    EdgeField,
    FaceField,
    Grid,
    NodeField,
    l2_edge,
    l2_node,
)
from thermoelectric.ops import boundary_mask, div_edge, div_face
from thermoelectric.verification import build_case, random_compatible_flux, random_spec

PI = math.pi
SIGMOID = ConductivityModel.sigmoid(1.0, 2.0, 0.5, 0.5)


def electric(n=6, sigma=SIGMOID, e=(1.0, 0.5, 0.0), u0=None, **kw):
    g = Grid.cube(n) if isinstance(n, int) else Grid(n)
    u0 = NodeField.zeros(g) if u0 is None else NodeField.from_function(g, u0)
    return ProblemSpec(g, sigma, u0, e_const=e, **kw)


def h0_tangential(n, sigma=SIGMOID, **kw):
    g = Grid.cube(n)
    h0 = (lambda x, y, z: 0.5 * np.sin(PI * y) * z,
          lambda x, y, z: np.cos(PI * z) * x,
          lambda x, y, z: 0.3 * x * y)
    flux, cnorm = tangential_flux(g, BoundaryData("tangential", h0=h0))
    return ProblemSpec(g, sigma, NodeField.zeros(g), mode="tangential", flux=flux, curl_h0_l2=cnorm, **kw)


# ProblemSpec validation ----------------------------------------------------------------


def test_spec_rejects_bad_inputs():
    g = Grid.cube(3)
    u0 = NodeField.zeros(g)
    with pytest.raises(ValueError, match="damping"):
        ProblemSpec(g, SIGMOID, u0, damping=0.0)
    with pytest.raises(ValueError, match="damping"):
        ProblemSpec(g, SIGMOID, u0, damping=1.5)
    with pytest.raises(ValueError, match="mode"):
        ProblemSpec(g, SIGMOID, u0, mode="magnetic")
    with pytest.raises(ValueError, match="Joule"):
        ProblemSpec(g, SIGMOID, u0, joule="upwind")
    with pytest.raises(ValueError, match="flux"):
        ProblemSpec(g, SIGMOID, u0, mode="tangential")
    with pytest.raises(ValueError, match="electric mode"):
        ProblemSpec(g, SIGMOID, u0, flux=FaceField.zeros(g))
    with pytest.raises(ValueError, match="tangential mode takes"):
        ProblemSpec(g, SIGMOID, u0, mode="tangential", flux=FaceField.zeros(g), e_const=(1, 0, 0))
    with pytest.raises(ValueError, match="grid"):
        ProblemSpec(g, SIGMOID, NodeField.zeros(Grid.cube(4)))


def test_spec_rejects_incompatible_flux(rng):
    g = Grid.cube(3)
    f = random_compatible_flux(g, rng)
    bad = FaceField(g, f[0] + 0.1 * (boundary_mask(g).faces[0]), f[1], f[2])
    with pytest.raises(IncompatibleDataError):
        ProblemSpec(g, SIGMOID, NodeField.zeros(g), mode="tangential", flux=bad)


def test_phi0_is_potential_of_E0(rng):
    g = Grid((3, 4, 5), (1.0, 2.0, 0.5))
    psi = NodeField(g, rng.normal(size=g.node_shape))
    spec = ProblemSpec(g, SIGMOID, NodeField.zeros(g), psi0=psi, e_const=(0.3, -1.0, 2.0))
    from thermoelectric.ops import grad

    for a, b in zip(grad(spec.phi0), spec.E0):
        assert_allclose(a, b, atol=1e-12)
    assert abs(np.sum(g.node_weights() * spec.phi0.values)) <= 1e-12


# potential_solve ------------------------------------------------------------------------


def test_potential_constant_sigma_constant_field():
    spec = electric(5, ConductivityModel.constant(2.0), e=(0.3, 0.2, -0.1))
    pot = potential_solve(spec, NodeField.zeros(spec.grid))
    assert np.max(np.abs(pot.phi.values)) <= 1e-10
    for c, e in zip(pot.J, (0.6, 0.4, -0.2)):
        assert_allclose(c, e, atol=1e-10)


def test_potential_tangential_zero_flux():
    g = Grid.cube(4)
    spec = ProblemSpec(g, SIGMOID, NodeField.zeros(g), mode="tangential", flux=FaceField.zeros(g))
    pot = potential_solve(spec, NodeField.zeros(g))
    assert_array_equal(pot.phi.values, 0.0)
    for c in pot.J:
        assert_array_equal(c, 0.0)


def test_potential_slab_current_matches_quadrature():
    case = build_case("slab-sigma")
    g = Grid.cube(16)
    spec = case.spec(g, linear_tol=1e-12)
    u = NodeField.from_function(g, case.u)
    pot = potential_solve(spec, u)
    Jc = case.exact_current
    # O(h^2) discretization error; the order itself is checked in the elliptic tests
    assert np.max(np.abs(pot.J[0] - Jc)) <= (PI / 16) ** 2 * Jc
    assert np.max(np.abs(pot.J[1])) <= (PI / 16) ** 2 * Jc


@settings(max_examples=25)
@given(st.integers(0, 2 ** 32 - 1))
def test_property_current_conservation(seed):
    rng = np.random.default_rng(seed)
    spec, u = random_spec(rng, source_phi=None, linear_tol=1e-10)
    pot = potential_solve(spec, u)
    g = spec.grid
    assert pot.report.converged
    d = div_edge(pot.J).values[g.interior()]
    jnorm = math.sqrt(sum(np.sum(c * c) for c in pot.J))
    assert np.max(np.abs(d), initial=0.0) <= 10 * spec.linear_tol * jnorm / min(g.h)


# joule_rhs -----------------------------------------------------------------------------


@pytest.mark.parametrize("joule", ["divergence", "pointwise"])
def test_joule_zero_current(joule):
    spec = electric(4, joule=joule)
    g = spec.grid
    z = EdgeField.zeros(g)
    rhs_node, rhs_div = joule_rhs(spec, NodeField.zeros(g), z, EdgeField.constant(g, (1.0, 1.0, 1.0)))
    assert_array_equal(rhs_node.values, 0.0)
    if rhs_div is not None:
        for c in rhs_div:
            assert_array_equal(c, 0.0)


def test_joule_pointwise_constant_current():
    s0, e = 2.0, (0.3, 0.2, -0.1)
    spec = electric(4, ConductivityModel.constant(s0), e=e, joule="pointwise")
    pot = potential_solve(spec, NodeField.zeros(spec.grid))
    rhs, div = joule_rhs(spec, pot.phi, pot.J, pot.sigma_edges)
    assert div is None
    assert_allclose(rhs.values[spec.grid.interior()], s0 * sum(v * v for v in e), rtol=1e-9)


def test_joule_modes_agree_under_refinement():
    # grad(phi + phi0) = J / sigma_e on every edge, so the two assemblies coincide at interior
    # nodes up to solver tolerance, which is stronger than the O(h^2) agreement required
    case = build_case("smooth-nonlinear")
    for n in (8, 16, 32):
        g = Grid.cube(n)
        u = NodeField.from_function(g, case.u)
        Ts = []
        for joule in ("divergence", "pointwise"):
            spec = case.spec(g, joule=joule, linear_tol=1e-12)
            Ts.append(picard_step(spec, u).T_u.values)
        assert l2_node(Ts[0] - Ts[1], g) <= 1e-10 * l2_node(Ts[0], g)


@settings(max_examples=20)
@given(st.integers(0, 2 ** 32 - 1))
def test_property_joule_modes_identical_rhs(seed):
    spec, u = random_spec(np.random.default_rng(seed), n_max=5)
    pot = potential_solve(spec, u)
    node_d, div_d = joule_rhs(spec.replace(joule="divergence"), pot.phi, pot.J, pot.sigma_edges)
    node_p, _ = joule_rhs(spec.replace(joule="pointwise"), pot.phi, pot.J, pot.sigma_edges)
    total = node_d.values + div_edge(div_d).values
    inner = spec.grid.interior()
    scale = 1.0 + np.max(np.abs(node_p.values))
    assert np.max(np.abs(total - node_p.values)[inner], initial=0.0) <= 1e-8 * scale


# picard_step / run_fixed_point ------------------------------------------------------------


def test_constant_sigma_one_step_fixed_point():
    spec = electric(6, ConductivityModel.constant(1.5), u0=lambda x, y, z: 1 + x)
    s1 = picard_step(spec, harmonic_extension(spec))
    s2 = picard_step(spec, s1.u)
    assert l2_node(s2.u.values - s1.u.values, spec.grid) <= 1e-9


def test_zero_data_zero_fixed_point():
    spec = electric(5, e=(0.0, 0.0, 0.0))
    r = run_fixed_point(spec)
    assert r.diagnostics.converged and r.diagnostics.iterations == 1
    assert_array_equal(r.u.values, 0.0)
    assert all(np.all(c == 0) for c in r.J)


def test_sigmoid_small_field_contracts():
    spec = electric(8, e=(0.5, 0.0, 0.0))
    u = harmonic_extension(spec)
    steps = []
    for _ in range(3):
        s = picard_step(spec, u)
        steps.append(l2_node(s.u.values - u.values, spec.grid))
        u = s.u
    assert steps[2] < steps[1] < steps[0]


def test_constant_sigma_converges_in_two():
    spec = electric(8, ConductivityModel.constant(3.0), u0=lambda x, y, z: x * y)
    r = run_fixed_point(spec)
    assert r.diagnostics.converged
    assert r.diagnostics.iterations <= 2


def test_diagnostics_record_every_iteration():
    spec = electric(6, picard_maxiter=3, picard_tol=1e-30)
    r = run_fixed_point(spec)
    d = r.diagnostics
    assert d.status == "not converged"
    assert d.iterations == 3 == len(d.records)
    assert [rec.iteration for rec in d.records] == [1, 2, 3]
    assert d.records[0].contraction is None
    assert len(d.contraction_factors()) == 2
    assert all(0 < c < 1 for c in d.contraction_factors())


def test_linear_failure_is_reported():
    spec = electric(8, linear_maxiter=1, linear_tol=1e-12)
    r = run_fixed_point(spec)
    assert r.diagnostics.status == "linear solver failure"
    assert not r.diagnostics.records[-1].linear_converged


def test_damped_iteration_reaches_same_fixed_point():
    a = run_fixed_point(electric(6, e=(1.5, 0.0, 0.5), picard_tol=1e-11))
    b = run_fixed_point(electric(6, e=(1.5, 0.0, 0.5), picard_tol=1e-11, damping=0.6))
    assert a.diagnostics.converged and b.diagnostics.converged
    assert b.diagnostics.iterations > a.diagnostics.iterations
    assert l2_node(a.u.values - b.u.values, a.u.grid) <= 1e-8 * (1 + l2_node(a.u, a.u.grid))


def test_mms_nonlinear_16_matches_truth():
    case = build_case("smooth-nonlinear")
    g = Grid.cube(16)
    r = run_fixed_point(case.spec(g, picard_tol=1e-11, linear_tol=1e-12))
    assert r.diagnostics.converged
    err = l2_node(r.u.values - NodeField.from_function(g, case.u).values, g)
    # second order: about (pi h)^2 / 12 relative to unit-size fields
    assert err <= (PI / 16) ** 2


@settings(max_examples=15)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.05, 2.0))
def test_property_energy_bound_every_iterate(seed, scale):
    rng = np.random.default_rng(seed)
    g = Grid(tuple(int(v) for v in rng.integers(3, 7, size=3)))
    sigma = ConductivityModel.sigmoid(float(rng.uniform(0.5, 1.5)), float(rng.uniform(1.6, 4.0)),
                                      float(rng.uniform(-1, 1)), float(rng.uniform(0.2, 2.0)))
    psi = NodeField(g, rng.normal(size=g.node_shape) * scale)
    spec = ProblemSpec(g, sigma, NodeField(g, rng.uniform(0, 1, size=g.node_shape)), psi0=psi,
                       e_const=tuple(scale * rng.normal(size=3)), picard_maxiter=6)
    bound = sigma.sigma2 * l2_edge(spec.E0)
    u = harmonic_extension(spec)
    for _ in range(4):
        s = picard_step(spec, u)
        assert l2_edge(s.J) <= bound * (1 + 1e-6)
        assert bound_ratio(spec, s.J) <= 1 + 1e-6
        u = s.u


@pytest.mark.parametrize("n", [6, 10])
def test_tangential_bound(n):
    spec = h0_tangential(n, picard_maxiter=5)
    r = run_fixed_point(spec)
    for rec in r.diagnostics.records:
        assert rec.bound_ratio is not None and rec.bound_ratio <= 1 + 1e-6


@settings(max_examples=15)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.1, 3.0))
def test_property_pointwise_nonnegative(seed, scale):
    rng = np.random.default_rng(seed)
    spec, _ = random_spec(rng, n_max=6, joule="pointwise", source_phi=None, source_u=None,
                          picard_maxiter=5, linear_tol=1e-11)
    spec = spec.replace(u0=NodeField(spec.grid, scale * spec.u0.values))
    r = run_fixed_point(spec)
    assert np.min(r.u.values) >= -1e-8


@settings(max_examples=10)
@given(st.integers(0, 2 ** 32 - 1))
def test_property_fixed_point_residual(seed):
    rng = np.random.default_rng(seed)
    spec, _ = random_spec(rng, n_max=5, source_phi=None, picard_tol=1e-9, picard_maxiter=200)
    r = run_fixed_point(spec)
    if not r.diagnostics.converged:
        return
    again = picard_step(spec.replace(damping=1.0), r.u)
    tol = spec.picard_tol * (1 + l2_node(r.u, spec.grid))
    assert l2_node(again.u.values - r.u.values, spec.grid) <= 2 * tol


@settings(max_examples=10)
@given(st.integers(0, 2 ** 32 - 1))
def test_property_constant_sigma_map_is_constant(seed):
    rng = np.random.default_rng(seed)
    spec, u = random_spec(rng, n_max=5, sigma=ConductivityModel.constant(float(rng.uniform(0.5, 3))),
                          damping=1.0, linear_tol=1e-12)
    v = NodeField(spec.grid, rng.normal(size=spec.grid.node_shape) * 5)
    a = picard_step(spec, u).u.values
    b = picard_step(spec, v).u.values
    assert np.max(np.abs(a - b)) <= 1e-8 * (1 + np.max(np.abs(a)))


# reconstruct_H ---------------------------------------------------------------------------


def chi_current(g):
    return EdgeField.from_function(
        g, lambda x, y, z: 0 * x, lambda x, y, z: 0 * x,
        lambda x, y, z: 2 * PI ** 2 * np.sin(PI * x) * np.sin(PI * y))


def chi_H(g):
    return FaceField.from_function(
        g,
        lambda x, y, z: PI * np.sin(PI * x) * np.cos(PI * y),
        lambda x, y, z: -PI * np.cos(PI * x) * np.sin(PI * y),
        lambda x, y, z: 0 * x,
    )


def test_reconstruct_zero():
    g = Grid.cube(4)
    H, rep = reconstruct_H(EdgeField.zeros(g))
    assert all(np.all(c == 0) for c in H)
    assert rep.converged


def test_reconstruct_chi_second_order():
    errs = []
    for n in (8, 16):
        g = Grid.cube(n)
        H, rep = reconstruct_H(chi_current(g), tol=1e-9)
        assert rep.converged
        bm = boundary_mask(g)
        for d in range(3):
            assert_array_equal(H[d][bm.faces[d]], 0.0)
        ex = chi_H(g)
        errs.append(math.sqrt(sum(np.sum(g.face_weights(d) * (H[d] - ex[d]) ** 2) for d in range(3))))
    assert math.log2(errs[0] / errs[1]) >= 1.8


def test_reconstruct_from_run_self_check():
    r = run_fixed_point(electric(8, e=(1.0, 0.3, 0.0)))
    tol = 1e-9
    H, rep = reconstruct_H(r.J, tol=tol)
    assert rep.converged
    assert rep.div_residual <= tol and rep.curl_residual <= tol
    g = r.J.grid
    hn = math.sqrt(sum(np.sum(g.face_weights(d) * H[d] ** 2) for d in range(3)))
    dv = math.sqrt(np.sum(g.cell_volume * div_face(H).values ** 2))
    assert dv <= tol * hn


def test_reconstruct_rejects_divergent_current():
    g = Grid.cube(4)
    J = EdgeField.from_function(g, lambda x, y, z: x, lambda x, y, z: 0 * x, lambda x, y, z: 0 * x)
    with pytest.raises(IncompatibleCurrentError):
        reconstruct_H(J)


def test_reconstruct_maxiter_reports_failure():
    # the chi current is an eigenvector of the normal operator, so use a solved current instead
    J = run_fixed_point(electric(8, e=(1.0, 0.3, 0.0))).J
    H, rep = reconstruct_H(J, tol=1e-10, maxiter=3)
    assert not rep.converged and rep.iterations == 3
