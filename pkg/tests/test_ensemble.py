import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import unit_square_layout
from ensconv import assembly, linsolve, mesh, mms
from ensconv.config import RunConfig
from ensconv.ensemble import (EnsembleSolver, EnsembleState, Physics, Scheme, SchemeKind, SolverError,
                              StabilityError, check_stability, ensemble_mean, fluctuation, gradient_energies,
                              zero_mean_pressure)
from ensconv.experiments import mms_problem


def zero_state(lay, J, dt=1e-2):
    return EnsembleState(np.zeros((J, lay.n_velocity)), np.zeros((J, lay.n_nodes)),
                         np.zeros((J, lay.n_pressure)), 0.0, dt)


def random_state(lay, J, seed=0, dt=1e-2):
    r = np.random.default_rng(seed)
    st_ = EnsembleState(r.standard_normal((J, lay.n_velocity)), r.standard_normal((J, lay.n_nodes)),
                        r.standard_normal((J, lay.n_pressure)), 0.0, dt)
    st_.u[:, lay.velocity_fixed] = 0.0
    return st_


def test_mean_and_fluctuation_basics(layout4, rng):
    s = random_state(layout4, 1)
    np.testing.assert_array_equal(ensemble_mean(s)[0], s.u[0])
    np.testing.assert_array_equal(fluctuation(s, 0), 0.0)
    base = rng.standard_normal(layout4.n_velocity)
    d = rng.standard_normal(layout4.n_velocity)
    pair = EnsembleState(np.array([base + d, base - d]), np.zeros((2, 3)), np.zeros((2, 3)))
    np.testing.assert_allclose(ensemble_mean(pair)[0], base, atol=1e-15)
    np.testing.assert_allclose(fluctuation(pair, 0), d, atol=1e-15)
    np.testing.assert_allclose(fluctuation(pair, 1), -d, atol=1e-15)


def test_mean_matches_summation(layout4):
    s = random_state(layout4, 3, seed=5)
    direct = (s.u[0] + s.u[1] + s.u[2]) / 3
    np.testing.assert_allclose(ensemble_mean(s)[0], direct, rtol=1e-15, atol=1e-15)
    total = sum(fluctuation(s, j) for j in range(3))
    np.testing.assert_allclose(total, 0.0, atol=1e-14)


def test_fluctuation_index_checked(layout4):
    with pytest.raises(IndexError):
        fluctuation(random_state(layout4, 2), 2)


def test_state_validation():
    with pytest.raises(ValueError):
        EnsembleState(np.zeros((2, 3)), np.zeros((1, 3)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        EnsembleState(np.zeros(3), np.zeros(3), np.zeros(3), dt=0.0)


def test_single_member_never_violates(layout4):
    s = random_state(layout4, 1)
    stiff = assembly.assemble_stiffness(layout4, assembly.Role.VELOCITY)
    ok, lhs = check_stability(s, layout4.mesh.h, stiff)
    assert ok and lhs == 0.0


def _state_with_lhs(lay, stiff, target, dt):
    r = np.random.default_rng(3)
    w = r.standard_normal(lay.n_velocity)
    w[lay.velocity_fixed] = 0.0
    w *= np.sqrt(target * lay.mesh.h / dt / (w @ stiff @ w))
    return EnsembleState(np.array([w, -w]), np.zeros((2, lay.n_nodes)), np.zeros((2, lay.n_pressure)), 0.0, dt)


def test_constructed_lhs_two(layout4):
    solver = EnsembleSolver(layout4, Scheme(), Physics(Ra=0.0))
    s = _state_with_lhs(layout4, solver.stiff_monitor, 2.0, 1e-2)
    ok, lhs = check_stability(s, layout4.mesh.h, solver.stiff_monitor)
    assert not ok and lhs == pytest.approx(2.0)


@given(st.floats(1.01, 1e4))
@settings(max_examples=15, deadline=None)
def test_violation_halves_until_satisfied(target):
    lay = unit_square_layout(3)
    solver = EnsembleSolver(lay, Scheme(), Physics(Ra=0.0))
    s = _state_with_lhs(lay, solver.stiff_monitor, target, 1e-2)
    out = solver.step(s)
    k = int(np.ceil(np.log2(target)))
    assert out.halvings == k
    assert out.dt == pytest.approx(1e-2 / 2**k)
    assert solver.log[-1].stability_lhs <= 1.0


def test_halving_cap_aborts(layout4):
    solver = EnsembleSolver(layout4, Scheme(), Physics(Ra=0.0), max_halvings=2)
    s = _state_with_lhs(layout4, solver.stiff_monitor, 100.0, 1e-2)
    with pytest.raises(StabilityError):
        solver.step(s)


def test_zero_data_stays_zero(layout4):
    solver = EnsembleSolver(layout4, Scheme(), Physics())
    out = solver.run(zero_state(layout4, 2), 0.05)
    assert np.abs(out.u).max() == 0.0 and np.abs(out.T).max() == 0.0 and np.abs(out.p).max() == 0.0


@pytest.mark.parametrize("J", [1, 2, 3])
def test_two_factorizations_per_step(layout4, J):
    solver = EnsembleSolver(layout4, Scheme(), Physics(Ra=1e3))
    s = random_state(layout4, J, dt=1e-4)
    linsolve.counter.reset()
    solver.run(s, 5e-4)
    assert all(i.factorizations == 2 for i in solver.log)
    assert linsolve.counter.count == 2 * len(solver.log)


def test_identical_members_match_single_run(layout4):
    solver = EnsembleSolver(layout4, Scheme(), Physics(Ra=1e3))
    one = random_state(layout4, 1, dt=1e-3)
    three = EnsembleState(np.repeat(one.u, 3, 0), np.repeat(one.T, 3, 0), np.repeat(one.p, 3, 0), 0.0, 1e-3)
    a = solver.run(one, 5e-3)
    b = solver.run(three, 5e-3)
    for j in range(3):
        np.testing.assert_allclose(b.u[j], a.u[0], rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(b.T[j], a.T[0], rtol=1e-12, atol=1e-12)


def test_run_lands_on_end_time(layout4):
    solver = EnsembleSolver(layout4, Scheme(), Physics(Ra=0.0))
    out = solver.run(zero_state(layout4, 1, dt=0.03), 0.1)
    assert out.t == pytest.approx(0.1, abs=1e-15)
    assert [round(i.dt, 12) for i in solver.log] == [0.03, 0.03, 0.03, 0.01]


def test_divergence_free_steps(layout4):
    solver = EnsembleSolver(layout4, Scheme(), Physics(Ra=1e4))
    solver.run(random_state(layout4, 2, dt=1e-4), 1e-3)
    assert max(i.div_residual for i in solver.log) <= 1e-10


def test_thin_wall_velocity_ignores_new_temperature(layout4):
    # changing wall data at t^{n+1} alters T^{n+1}; only the thick-wall velocity sees it
    s = random_state(layout4, 1, dt=1e-3)
    for kind, same in ((SchemeKind.THIN_WALL, True), (SchemeKind.THICK_WALL, False)):
        outs = []
        for val in (0.0, 1.0):
            solver = EnsembleSolver(layout4, Scheme(kind), Physics(Ra=1e3),
                                    temperature_bc=lambda j, x, y, t, v=val: v * np.ones_like(x))
            outs.append(solver.step(s))
        assert np.allclose(outs[0].u, outs[1].u, atol=1e-13) == same


def test_thick_wall_on_embedded_solid():
    msh = mesh.classify_boundary(mesh.build_embedded_solid(8, mesh.frame_strips(1, 8)), {"left", "right"})
    lay = assembly.DofLayout(msh)
    solver = EnsembleSolver(lay, Scheme(SchemeKind.THICK_WALL), Physics(Ra=1e4, kappa_s=0.5),
                            temperature_bc=lambda j, x, y, t: 1.0 - x)
    s = solver.impose_boundary(zero_state(lay, 2, dt=1e-3))
    out = solver.run(s, 0.02)
    solid_nodes = np.unique(lay.cell_nodes[lay.solid_cells])
    n = lay.n_nodes
    assert np.abs(out.u[:, solid_nodes]).max() == 0.0 and np.abs(out.u[:, n + solid_nodes]).max() == 0.0
    assert np.abs(out.T[:, solid_nodes]).max() > 0.0
    assert np.abs(out.u).max() > 0.0


def test_conduction_is_already_steady(cavity8):
    solver = EnsembleSolver(cavity8, Scheme(include_u1_source=False), Physics(Ra=0.0),
                            temperature_bc=lambda j, x, y, t: 1.0 - x)
    T = 1.0 - cavity8.nodes[:, 0]
    s = EnsembleState(np.zeros((1, cavity8.n_velocity)), T[None], np.zeros((1, cavity8.n_pressure)), 0.0, 1e-3)
    _, steps, converged = solver.run_to_steady(s, 1e-5)
    assert converged and steps == 1
    _, steps, converged = solver.run_to_steady(s, 0.0, max_steps=3)
    assert not converged and steps == 3


def test_nan_forcing_aborts(layout4):
    solver = EnsembleSolver(layout4, Scheme(), Physics(),
                            forcing=lambda j, x, y, t: (None, np.full_like(x, np.nan)))
    with pytest.raises(SolverError):
        solver.step(zero_state(layout4, 2))


def test_zero_mean_pressure(layout4, rng):
    p = rng.standard_normal((2, layout4.n_pressure))
    q = zero_mean_pressure(layout4, p)
    np.testing.assert_allclose(q @ (layout4.mass_p1 @ np.ones(layout4.n_pressure)), 0.0, atol=1e-14)


def test_single_member_mms_first_order_in_time():
    cfg = RunConfig.defaults("convergence-time", J=1)
    errs = []
    for dt in (0.1, 0.05):
        prob = mms_problem(cfg, 8, dt)
        series = []
        prob.solver.run(prob.state, 0.4, lambda s: series.append(
            mms.error_norms(prob.layout, s.u[0], s.T[0], s.p[0], prob.solution, s.t)["u_l2"]))
        errs.append(max(series))
    assert 1.6 <= errs[0] / errs[1] <= 2.4


def test_gradient_energies_single_member_zero(layout4):
    s = random_state(layout4, 1)
    stiff = assembly.assemble_stiffness(layout4, assembly.Role.VELOCITY)
    assert gradient_energies(s, stiff)[0] == 0.0
