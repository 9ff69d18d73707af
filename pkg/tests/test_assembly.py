import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given, settings, strategies as st

from conftest import unit_square_layout
from ensconv import assembly, elements, mesh
from ensconv.assembly import Role


def test_layout_requires_classified_boundary():
    with pytest.raises(ValueError):
        assembly.DofLayout(mesh.build_structured_unit_square(2))


def test_dof_counts(layout4):
    assert layout4.n_nodes == 25 + 56
    assert layout4.n_velocity == 2 * layout4.n_nodes
    assert layout4.n_pressure == 25


@pytest.mark.parametrize("m", [1, 3, 6])
def test_mass_integrates_constants(m):
    lay = unit_square_layout(m)
    for role in (Role.TEMPERATURE, Role.PRESSURE):
        mm = assembly.assemble_mass(lay, role)
        one = np.ones(mm.shape[0])
        assert one @ mm @ one == pytest.approx(1.0, abs=1e-13)
        assert abs(mm - mm.T).max() <= 1e-14


def test_p1_mass_single_triangle():
    msh = mesh.TriMesh(np.array([[0.0, 0], [1, 0], [0, 1]]), np.array([[0, 1, 2]]),
                       np.array([[0, 1], [1, 2], [2, 0]]), np.full(3, 1), np.zeros(1, dtype=int), np.sqrt(2))
    mm = assembly.assemble_mass(assembly.DofLayout(msh), Role.PRESSURE).toarray()
    np.testing.assert_allclose(np.diag(mm), 0.5 / 6)
    np.testing.assert_allclose(mm[0, 1], 0.5 / 12)


def test_stiffness_kernel_and_linearity(layout4):
    a1 = assembly.assemble_stiffness(layout4, Role.TEMPERATURE, 1.0)
    a2 = assembly.assemble_stiffness(layout4, Role.TEMPERATURE, 2.0)
    np.testing.assert_allclose(a1 @ np.ones(a1.shape[0]), 0.0, atol=1e-13)
    assert abs(a2 - 2 * a1).max() <= 1e-13


def test_stiffness_rejects_nonpositive(layout4):
    with pytest.raises(ValueError):
        assembly.assemble_stiffness(layout4, Role.TEMPERATURE, 0.0)


def test_dirichlet_energy_of_x_squared():
    lay = unit_square_layout(8)
    T = assembly.interpolate(lay, lambda x, y: x**2)
    a = assembly.assemble_stiffness(lay, Role.TEMPERATURE)
    assert T @ a @ T == pytest.approx(4 / 3, rel=1e-13)


def test_divergence_of_constant_and_rotation(layout4):
    b = assembly.assemble_divergence(layout4)
    const = assembly.interpolate(layout4, lambda x, y: np.array([2.0, -1.0])[:, None], Role.VELOCITY)
    rot = assembly.interpolate(layout4, lambda x, y: np.array([-y, x]), Role.VELOCITY)
    np.testing.assert_allclose(b @ const, 0.0, atol=1e-14)
    np.testing.assert_allclose(b @ rot, 0.0, atol=1e-14)


def test_divergence_of_x_is_integral_of_q(layout4):
    b = assembly.assemble_divergence(layout4)
    u = assembly.interpolate(layout4, lambda x, y: np.array([x, 0 * y]), Role.VELOCITY)
    mp = assembly.assemble_mass(layout4, Role.PRESSURE)
    np.testing.assert_allclose(b @ u, mp @ np.ones(layout4.n_pressure), atol=1e-15)


def test_zero_advection_gives_zero(layout4):
    n = assembly.assemble_convection(layout4, np.zeros(layout4.n_velocity), Role.TEMPERATURE)
    assert abs(n).max() == 0.0


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_skew_symmetry_random(seed):
    lay = unit_square_layout(4)
    r = np.random.default_rng(seed)
    w = r.standard_normal(lay.n_velocity)
    for role in (Role.VELOCITY, Role.TEMPERATURE):
        n = assembly.assemble_convection(lay, w, role)
        v = r.standard_normal(n.shape[0])
        assert abs(v @ n @ v) <= 1e-12 * (v @ v) * np.abs(w).max()


def _direct_forms(lay, u, v, w, order=8):
    """Independent element loop: ``(u.grad v, w)`` and ``((div u) v, w)`` for scalar v, w."""
    q = elements.quadrature(order)
    phi, dphi = elements.basis(2, q.points)
    adv = div = 0.0
    u2 = lay.split_velocity(u)
    for e, nodes in enumerate(lay.cell_nodes):
        xs = lay.mesh.vertices[lay.mesh.triangles[e]]
        jac = np.column_stack([xs[1] - xs[0], xs[2] - xs[0]])
        det = abs(np.linalg.det(jac))
        ginv = np.linalg.inv(jac)
        g = dphi @ ginv  # (Q,6,2)
        uq = np.stack([phi @ u2[0, nodes], phi @ u2[1, nodes]], axis=-1)
        gu = np.stack([g[..., 0] @ u2[0, nodes], g[..., 1] @ u2[1, nodes]], axis=-1)
        gv = np.einsum("qkd,k->qd", g, v[nodes])
        vq, wq = phi @ v[nodes], phi @ w[nodes]
        adv += det * np.sum(q.weights * np.sum(uq * gv, axis=1) * wq)
        div += det * np.sum(q.weights * gu.sum(axis=1) * vq * wq)
    return adv, div


def test_skew_form_identity_against_direct_quadrature(rng):
    # b(u, v, w) = (u.grad v, w) + 1/2 ((div u) v, w) when v vanishes on the boundary
    lay = unit_square_layout(2)
    u = rng.standard_normal(lay.n_velocity)
    v = rng.standard_normal(lay.n_nodes)
    w = rng.standard_normal(lay.n_nodes)
    v[lay.temperature_fixed] = 0.0
    n = assembly.convection_scalar(lay, u)
    lhs = w @ n @ v
    adv, div = _direct_forms(lay, u, v, w)
    assert lhs == pytest.approx(adv + 0.5 * div, rel=1e-12)


def test_convection_action_matches_matrix(layout4, rng):
    w = rng.standard_normal(layout4.n_velocity)
    fields = rng.standard_normal((3, layout4.n_nodes))
    n = assembly.convection_scalar(layout4, w)
    np.testing.assert_allclose(assembly.convection_action(layout4, w, fields), (n @ fields.T).T,
                               atol=1e-12)


def test_buoyancy(layout4):
    g = assembly.assemble_buoyancy(layout4, (0.0, 1.0))
    n = layout4.n_nodes
    assert abs(g[:n]).max() == 0.0
    v = np.zeros(layout4.n_velocity)
    v[n:] = assembly.interpolate(layout4, lambda x, y: x * y)
    assert v @ g @ np.ones(n) == pytest.approx(0.25, rel=1e-13)


def test_buoyancy_direction_must_be_unit(layout4):
    with pytest.raises(ValueError):
        assembly.assemble_buoyancy(layout4, (0.0, 0.0))


def test_u1_source():
    lay = unit_square_layout(8)
    s = assembly.assemble_u1_source(lay)
    n = lay.n_nodes
    only_u2 = np.concatenate([np.zeros(n), np.ones(n)])
    assert abs(s @ only_u2).max() == 0.0
    ones = np.ones(n)
    assert ones @ s @ np.concatenate([ones, np.zeros(n)]) == pytest.approx(1.0)
    ux = assembly.interpolate(lay, lambda x, y: np.array([x, 0 * y]), Role.VELOCITY)
    assert ones @ s @ ux == pytest.approx(0.5, rel=1e-13)


def test_load_vector_of_one(layout4):
    q = layout4.quad()
    f = assembly.load_vector(layout4, np.ones(q.wdet.shape))
    assert f.sum() == pytest.approx(1.0)


def test_dirichlet_zero_values_leave_free_rhs(layout4, rng):
    a = assembly.assemble_stiffness(layout4, Role.TEMPERATURE) + layout4.mass_p2
    rhs = rng.standard_normal(a.shape[0])
    fixed = layout4.temperature_fixed
    _, b = assembly.apply_dirichlet(a, rhs, fixed, np.zeros(a.shape[0]))
    np.testing.assert_array_equal(b[~fixed], rhs[~fixed])


def test_all_constrained_is_identity(layout4):
    a = layout4.mass_p2
    fixed = np.ones(a.shape[0], dtype=bool)
    a2, b = assembly.apply_dirichlet(a, np.zeros(a.shape[0]), fixed, np.arange(a.shape[0], dtype=float))
    assert abs(a2 - sp.identity(a.shape[0])).max() == 0.0
    np.testing.assert_array_equal(b, np.arange(a.shape[0]))


def test_conduction_solution_is_linear():
    lay = unit_square_layout(6, ("left", "right"))
    a = assembly.assemble_stiffness(lay, Role.TEMPERATURE)
    x = lay.nodes[:, 0]
    a2, b = assembly.apply_dirichlet(a, np.zeros(lay.n_nodes), lay.temperature_fixed, 1.0 - x)
    T = spla.spsolve(a2.tocsc(), b)
    np.testing.assert_allclose(T, 1.0 - x, atol=1e-12)


def test_dirichlet_rejects_nonfinite(layout4):
    a = layout4.mass_p2
    vals = np.full(int(layout4.temperature_fixed.sum()), np.nan)
    with pytest.raises(ValueError):
        assembly.apply_dirichlet(a, np.zeros(a.shape[0]), layout4.temperature_fixed, vals)


def test_dirichlet_multi_column(layout4, rng):
    a = layout4.mass_p2 + assembly.assemble_stiffness(layout4, Role.TEMPERATURE)
    fixed = layout4.temperature_fixed
    rhs = rng.standard_normal((a.shape[0], 3))
    vals = rng.standard_normal((int(fixed.sum()), 3))
    a2, b = assembly.apply_dirichlet(a, rhs, fixed, vals)
    for k in range(3):
        a1, b1 = assembly.apply_dirichlet(a, rhs[:, k], fixed, vals[:, k])
        np.testing.assert_allclose(b[:, k], b1)
