import numpy as np
import pytest
import sympy

from conftest import unit_square_layout
from ensconv import mms
from ensconv.config import RunConfig
from ensconv.ensemble import Physics
from ensconv.experiments import mms_run

x, y, t = sympy.symbols("x y t")
PSI = 5 * x**2 * (x - 1) ** 2 * y**2 * (y - 1) ** 2 * sympy.cos(t)
U = [sympy.diff(PSI, y), -sympy.diff(PSI, x)]
T_EXPR = U[0] + U[1]
P_EXPR = 10 * (2 * x - 1) * (2 * y - 1) * sympy.cos(t)


def _lam(expr):
    return sympy.lambdify((x, y, t), expr, "numpy")


def symbolic_residuals(scale, physics, thin):
    """Strong-form residual callables built from the symbolic fields scaled by ``scale``."""
    u = [scale * c for c in U]
    T = scale * T_EXPR
    p = scale * P_EXPR
    lap = lambda f: sympy.diff(f, x, 2) + sympy.diff(f, y, 2)
    mom = [sympy.diff(u[c], t) + u[0] * sympy.diff(u[c], x) + u[1] * sympy.diff(u[c], y)
           - physics.Pr * lap(u[c]) + sympy.diff(p, [x, y][c]) - physics.Pr * physics.Ra * physics.gamma[c] * T
           for c in range(2)]
    heat = sympy.diff(T, t) + u[0] * sympy.diff(T, x) + u[1] * sympy.diff(T, y) - physics.kappa_f * lap(T)
    if thin:
        heat = heat - u[0]
    return [_lam(mom[0]), _lam(mom[1])], _lam(heat)


def test_formula_matches_symbolic_fields(rng):
    pts = rng.random((100, 2))
    tt = rng.random(100) * 2
    sol = mms.ManufacturedSolution()
    F = sol.fields(pts[:, 0], pts[:, 1], 0.0)
    for c in range(2):
        np.testing.assert_allclose(sol.velocity(pts[:, 0], pts[:, 1], 0.3)[c],
                                   _lam(U[c])(pts[:, 0], pts[:, 1], 0.3), rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(F["p"], _lam(P_EXPR)(pts[:, 0], pts[:, 1], 0.0), rtol=1e-13)
    T_num = np.array([sol.temperature(a, b, c) for (a, b), c in zip(pts, tt)])
    np.testing.assert_allclose(T_num, _lam(T_EXPR)(pts[:, 0], pts[:, 1], tt), rtol=1e-12, atol=1e-15)


def test_divergence_free(rng):
    pts = rng.random((100, 2))
    F = mms.ManufacturedSolution().fields(pts[:, 0], pts[:, 1], 0.7)
    np.testing.assert_allclose(F["grad_u"][0, 0] + F["grad_u"][1, 1], 0.0, atol=1e-14)


def test_symmetric_points():
    sol = mms.ManufacturedSolution()
    np.testing.assert_allclose(sol.velocity(0.5, 0.5, 1.3), 0.0, atol=1e-16)
    np.testing.assert_allclose(sol.pressure(0.5, np.linspace(0, 1, 7), 0.2), 0.0, atol=1e-15)


@pytest.mark.parametrize("thin", [True, False])
@pytest.mark.parametrize("scale_eps", [0.0, 0.01, -0.01])
def test_forcing_strong_residual(rng, thin, scale_eps):
    phys = Physics(Pr=1.0, Ra=100.0, kappa_f=1.0)
    sol = mms.ManufacturedSolution().perturbed_member(scale_eps)
    mom, heat = symbolic_residuals(sol.scale, phys, thin)
    pts = rng.random((100, 2))
    tt = rng.random(100) * 3
    for (a, b), tk in zip(pts, tt):
        f, g = sol.forcing(thin, a, b, tk, phys)
        assert abs(mom[0](a, b, tk) - f[0]) <= 1e-10
        assert abs(mom[1](a, b, tk) - f[1]) <= 1e-10
        assert abs(heat(a, b, tk) - g) <= 1e-10


def test_forcing_at_quiet_corner_is_pressure_gradient():
    phys = Physics(Pr=1.0, Ra=100.0)
    sol = mms.ManufacturedSolution()
    f, _ = sol.forcing(True, 0.0, 0.0, 0.4, phys)
    np.testing.assert_allclose(f, sol.fields(0.0, 0.0, 0.4)["grad_p"], atol=1e-14)


def test_thin_and_thick_sources_differ_by_u1(rng):
    phys = Physics(Pr=1.0, Ra=100.0)
    sol = mms.ManufacturedSolution(1.01)
    pts = rng.random((20, 2))
    _, g_thin = sol.forcing(True, pts[:, 0], pts[:, 1], 0.5, phys)
    _, g_thick = sol.forcing(False, pts[:, 0], pts[:, 1], 0.5, phys)
    np.testing.assert_allclose(g_thick - g_thin, sol.velocity(pts[:, 0], pts[:, 1], 0.5)[0], atol=1e-13)


def test_perturbed_family():
    base = mms.ManufacturedSolution()
    assert base.perturbed_member(0.0) == base
    plus, minus = base.perturbed_member(1e-2), base.perturbed_member(-1e-2)
    px, py = np.array([0.3, 0.7]), np.array([0.2, 0.9])
    mean = 0.5 * (plus.velocity(px, py, 0.1) + minus.velocity(px, py, 0.1))
    np.testing.assert_allclose(mean, base.velocity(px, py, 0.1), rtol=1e-15)
    np.testing.assert_allclose(plus.velocity(np.array([0.0, 1.0]), np.array([0.4, 0.6]), 0.3), 0.0, atol=1e-16)
    with pytest.raises(ValueError):
        base.perturbed_member(-1.0)


def test_interpolant_error_nonzero_but_small():
    lay = unit_square_layout(8)
    sol = mms.ManufacturedSolution()
    u, p = mms.stokes_projection(lay, sol, 0.0)
    T = mms.interpolated_temperature(lay, sol, 0.0)
    e = mms.error_norms(lay, u, T, p, sol, 0.0)
    assert all(0.0 < v < 0.05 for v in e.values())


def test_table_row_m8():
    cfg = RunConfig.defaults("convergence-space")
    row = mms_run(cfg, 8, 1e-4, 1e-3)
    assert 3.68e-4 / 2 <= row["u_l2"] <= 3.68e-4 * 2


def test_errors_decrease_with_m():
    cfg = RunConfig.defaults("convergence-space")
    errs = [mms_run(cfg, m, 1e-4, 5e-4)["u_l2"] for m in (4, 8, 16)]
    assert errs[0] > errs[1] > errs[2]
