"""The three numerical experiments: cavity benchmark, MMS convergence, predictability."""

from __future__ import annotations

import dataclasses
import logging
import time
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from . import mesh as meshmod
from . import mms, output, perturb
from .assembly import DofLayout
from .config import Experiment, Formulation, RunConfig
from .ensemble import EnsembleSolver, EnsembleState, Physics, Scheme, SchemeKind

log = logging.getLogger(__name__)


def _physics(config: RunConfig, Ra: float) -> Physics:
    return Physics(Pr=config.Pr, Ra=Ra, kappa_f=config.kappa_f, kappa_s=config.kappa_s)


def _scheme(config: RunConfig) -> Scheme:
    return Scheme(kind=config.scheme, include_u1_source=config.include_u1_source)


def _bv_config(config: RunConfig) -> perturb.BredVectorConfig:
    return perturb.BredVectorConfig(delta_t=config.bv_delta_t, k_star=config.bv_k_star,
                                    seed=config.seed, eps=config.eps)


# -- benchmark ----------------------------------------------------------------

@dataclasses.dataclass
class BenchmarkProblem:
    layout: DofLayout
    solver: EnsembleSolver
    base: EnsembleState
    offset: np.ndarray  # add to the stored temperature to get the physical one


def cavity_layout(config: RunConfig, m: int | None = None) -> DofLayout:
    m = m or config.m
    if config.scheme is SchemeKind.THICK_WALL:
        msh = meshmod.build_embedded_solid(m, meshmod.frame_strips(config.solid_cells, m))
    else:
        msh = meshmod.build_structured_unit_square(m)
    return DofLayout(meshmod.classify_boundary(msh, {"left", "right"}))


def benchmark_problem(config: RunConfig, Ra: float, layout: DofLayout | None = None) -> BenchmarkProblem:
    """Differentially heated cavity, hot wall at ``x = 0``, started from ``u = (1, 1)``, ``T = 1``.

    In the decomposed formulation the stored temperature is ``T - (1 - x)``,
    which vanishes on both vertical walls; the lift enters as the body force
    ``Pr Ra gamma (1 - x)`` and, through the thin-wall u1 source, in the
    temperature equation.
    """
    layout = layout or cavity_layout(config)
    phys = _physics(config, Ra)
    lift = 1.0 - layout.nodes[:, 0]
    if config.formulation is Formulation.DECOMPOSED:
        if not config.include_u1_source:
            log.warning("decomposed formulation without the u1 source does not model the cavity")
        coef = phys.Pr * phys.Ra * np.asarray(phys.gamma, dtype=float)

        def forcing(j, x, y, t):
            return coef[:, None, None] * (1.0 - x)[None], None

        solver = EnsembleSolver(layout, _scheme(config), phys, forcing=forcing if Ra > 0 else None,
                                temperature_offset=lift)
        offset = lift
    else:
        if config.include_u1_source and config.scheme is SchemeKind.THIN_WALL:
            log.warning("physical wall data combined with the u1 source: the source is applied literally")

        def wall_data(j, x, y, t):
            return 1.0 - x

        solver = EnsembleSolver(layout, _scheme(config), phys, temperature_bc=wall_data)
        offset = np.zeros(layout.n_nodes)
    u = np.ones(layout.n_velocity)
    T = 1.0 - offset
    base = EnsembleState(u[None], T[None], np.zeros((1, layout.n_pressure)), 0.0, config.dt0)
    return BenchmarkProblem(layout, solver, solver.impose_boundary(base), offset)


def run_benchmark(config: RunConfig, write: bool = True) -> list[dict]:
    """One row per Rayleigh number: midline maxima, Nusselt numbers, final dt, step count."""
    if config.J != 2:
        raise ValueError("the benchmark uses a bred-vector pair (J = 2)")
    tol = 1e-5 if config.tolerance is None else config.tolerance
    out = Path(config.outdir)
    layout = cavity_layout(config)
    rows, eps_used = [], None
    for Ra in config.Ra:
        t0 = time.perf_counter()
        prob = benchmark_problem(config, Ra, layout)
        bv = perturb.breed(prob.solver, prob.base, _bv_config(config))
        eps_used = bv.eps
        pair = perturb.perturbed_initial_pair(prob.solver, prob.base, bv)
        prob.solver.log.clear()
        state, steps, converged = prob.solver.run_to_steady(pair, tol, config.max_steps)
        u_mean = state.u.mean(axis=0)
        T_mean = state.T.mean(axis=0) + prob.offset
        log_ = prob.solver.log
        rows.append({
            "Ra": float(Ra),
            "u1_max_x_half": diag.midline_max_velocity(layout, u_mean, diag.Midline.HORIZONTAL_AT_X_HALF),
            "u2_max_y_half": diag.midline_max_velocity(layout, u_mean, diag.Midline.VERTICAL_AT_Y_HALF),
            "nu_avg_hot": diag.nusselt(layout, T_mean, diag.Wall.HOT_X0)[2],
            "nu_avg_cold": diag.nusselt(layout, T_mean, diag.Wall.COLD_X1)[2],
            "final_dt": state.dt,
            "halvings": state.halvings,
            "steps": steps,
            "converged": converged,
            "t_final": state.t,
            "max_div_residual": max(i.div_residual for i in log_),
            "max_factorizations_per_step": max(i.factorizations for i in log_),
            "seconds": time.perf_counter() - t0,
        })
        log.info("benchmark Ra=%g: %s", Ra, rows[-1])
        if write and config.vtk:
            output.write_vtk(out / f"benchmark_Ra{Ra:g}.vtk", layout,
                             {"velocity": u_mean, "temperature": T_mean})
    if write:
        output.write_csv(out / "benchmark.csv", rows)
        output.write_manifest(out / "manifest.txt", config, {"eps": eps_used})
    return rows


# -- convergence --------------------------------------------------------------

@dataclasses.dataclass
class MMSProblem:
    layout: DofLayout
    solver: EnsembleSolver
    state: EnsembleState
    solution: mms.ManufacturedSolution


def mms_layout(m: int) -> DofLayout:
    msh = meshmod.build_structured_unit_square(m)
    return DofLayout(meshmod.classify_boundary(msh, {"left", "right", "top", "bottom"}))


def member_perturbations(J: int, eps: float) -> np.ndarray:
    """Symmetric scalings whose mean is zero; ``J = 2`` gives ``(eps, -eps)``."""
    if J == 1:
        return np.zeros(1)
    return eps * np.linspace(1.0, -1.0, J)


def mms_problem(config: RunConfig, m: int, dt: float, member_eps=None, Ra: float | None = None) -> MMSProblem:
    """Thin-wall ensemble whose members are scaled copies of the manufactured solution.

    ``member_eps=None`` perturbs each member's data; an explicit array of zeros
    gives unperturbed forcing for every member.
    """
    layout = mms_layout(m)
    phys = _physics(config, config.Ra[0] if Ra is None else Ra)
    base = mms.ManufacturedSolution()
    eps = member_perturbations(config.J, config.mms_eps) if member_eps is None else np.asarray(member_eps)
    sols = [base.perturbed_member(e) for e in eps]
    thin = config.scheme is SchemeKind.THIN_WALL and config.include_u1_source

    def forcing(j, x, y, t):
        return sols[j].forcing(thin, x, y, t, phys)

    solver = EnsembleSolver(layout, _scheme(config), phys, forcing=forcing)
    us, ps, Ts = [], [], []
    for s in sols:
        u, p = mms.stokes_projection(layout, s, 0.0)
        us.append(u)
        ps.append(p)
        Ts.append(mms.interpolated_temperature(layout, s, 0.0))
    state = EnsembleState(np.array(us), np.array(Ts), np.array(ps), 0.0, dt)
    return MMSProblem(layout, solver, state, base)


ERROR_KEYS = ("u_l2", "u_h1", "T_l2", "T_h1", "p_l2")


def mms_run(config: RunConfig, m: int, dt: float, t_final: float) -> dict:
    """L-infinity-in-time errors of the ensemble mean, including the initial time."""
    prob = mms_problem(config, m, dt)
    series = []

    def measure(s):
        u, T, p = s.u.mean(axis=0), s.T.mean(axis=0), s.p.mean(axis=0)
        series.append(mms.error_norms(prob.layout, u, T, p, prob.solution, s.t))

    measure(prob.state)
    t0 = time.perf_counter()
    prob.solver.run(prob.state, t_final, measure)
    log_ = prob.solver.log
    row = {k: max(e[k] for e in series) for k in ERROR_KEYS}
    row.update(steps=len(log_), max_div_residual=max(i.div_residual for i in log_),
               max_factorizations_per_step=max(i.factorizations for i in log_),
               min_factorizations_per_step=min(i.factorizations for i in log_),
               halvings=prob.solver.log[-1].halvings, seconds=time.perf_counter() - t0)
    return row


def add_rates(rows: list[dict], param: str) -> list[dict]:
    for prev, cur in zip(rows, rows[1:]):
        for k in ERROR_KEYS:
            cur[f"{k}_rate"] = diag.convergence_rate(prev[k], cur[k], prev[param], cur[param])
    for k in ERROR_KEYS:
        rows[0][f"{k}_rate"] = float("nan")
    return rows


def run_convergence(config: RunConfig, write: bool = True) -> list[dict]:
    """Error and rate table in space (``m_list``) or time (``dt_list``)."""
    rows = []
    if config.experiment is Experiment.CONVERGENCE_SPACE:
        t_final = config.t_final or 1e-3
        for m in config.m_list:
            row = {"m": m, "dt": config.dt0}
            row.update(mms_run(config, m, config.dt0, t_final))
            rows.append(row)
            log.info("convergence m=%d: %s", m, row)
        add_rates(rows, "m")
        name = "convergence_space.csv"
    elif config.experiment is Experiment.CONVERGENCE_TIME:
        t_final = config.t_final or 1.0
        for dt in config.dt_list:
            row = {"inv_dt": 1.0 / dt, "dt": dt, "m": config.m}
            row.update(mms_run(config, config.m, dt, t_final))
            rows.append(row)
            log.info("convergence dt=%g: %s", dt, row)
        add_rates(rows, "inv_dt")
        name = "convergence_time.csv"
    else:
        raise ValueError(f"not a convergence experiment: {config.experiment}")
    if write:
        lead = [c for c in ("m", "inv_dt", "dt") if c in rows[0]]
        cols = lead + [c for k in ERROR_KEYS for c in (k, f"{k}_rate")]
        cols += [c for c in rows[0] if c not in cols]
        output.write_csv(Path(config.outdir) / name, rows, cols)
        output.write_manifest(Path(config.outdir) / "manifest.txt", config)
    return rows


# -- predictability -----------------------------------------------------------

@dataclasses.dataclass
class PredictabilityResult:
    Ra: float
    series: list[dict]
    gamma: dict       # field -> (t, gamma) with the fixed window
    gamma_total: dict  # field -> whole-run exponent gamma_{t*}(0)
    horizon: dict     # field -> (delta, t_p)
    separation0: dict
    eps: np.ndarray


def predictability_run(config: RunConfig, Ra: float) -> PredictabilityResult:
    """Bred-vector pair on the manufactured problem with unperturbed data, plus an unperturbed run."""
    if config.J != 2:
        raise ValueError("predictability runs use a bred-vector pair (J = 2)")
    t_final = config.t_final or 0.5
    prob = mms_problem(config, config.m, config.dt0, member_eps=np.zeros(2), Ra=Ra)
    ref_prob = mms_problem(config, config.m, config.dt0, member_eps=np.zeros(1), Ra=Ra)
    layout, solver = prob.layout, prob.solver
    control = prob.state.member(0)
    bv = perturb.breed(ref_prob.solver, control, _bv_config(config))
    ref_prob.solver.log.clear()
    state = perturb.perturbed_initial_pair(solver, control, bv)
    ref = control
    mu, mT = diag.velocity_mass(layout), layout.mass_p2

    series = []

    def measure(s, r):
        rec = diag.record(layout, s, solver.stiff_monitor, symmetric_energy=config.symmetric_energy,
                          reference=r)
        row = rec.as_row()
        row["r_u"] = diag.relative_energy_fluctuation(s.u[0], s.u[1], mu)
        row["r_T"] = diag.relative_energy_fluctuation(s.T[0], s.T[1], mT)
        series.append(row)

    measure(state, ref)
    while state.t < t_final - 1e-9 * state.dt:
        state = solver.step(state, t_end=t_final)
        ref = ref_prob.solver.run(ref, state.t)
        measure(state, ref)

    t = np.array([r["t"] for r in series])
    gamma, gamma_total, horizon, sep0 = {}, {}, {}, {}
    for field in ("u", "T"):
        r = np.array([row[f"r_{field}"] for row in series])
        gamma[field] = diag.lyapunov_curve(t, r, config.gamma_window)
        gamma_total[field] = diag.effective_lyapunov(r[0], r[-1], t[-1] - t[0])
        sep0[field] = series[0][f"separation_{field}"]
        lo = sep0[field]
        deltas = np.geomspace(lo, config.delta_max, 25) if config.delta_max > lo else np.array([lo])
        horizon[field] = (deltas, diag.predictability_horizon(gamma_total[field], deltas, lo))
    return PredictabilityResult(Ra, series, gamma, gamma_total, horizon, sep0, bv.eps)


def run_predictability(config: RunConfig, write: bool = True) -> list[PredictabilityResult]:
    out = Path(config.outdir)
    results = []
    for Ra in config.Ra:
        res = predictability_run(config, Ra)
        results.append(res)
        log.info("predictability Ra=%g: gamma_total=%s", Ra, res.gamma_total)
        if not write:
            continue
        output.write_csv(out / f"predictability_Ra{Ra:g}.csv", res.series)
        rows = []
        tu, gu = res.gamma["u"]
        tT, gT = res.gamma["T"]
        for i in range(len(tu)):
            rows.append({"t": tu[i], "gamma_u": gu[i], "gamma_T": gT[i]})
        output.write_csv(out / f"lyapunov_Ra{Ra:g}.csv", rows)
        hrows = []
        for field in ("u", "T"):
            for d, tp in zip(*res.horizon[field]):
                hrows.append({"field": field, "delta": d, "t_p": tp,
                              "gamma_total": res.gamma_total[field],
                              "separation0": res.separation0[field]})
        output.write_csv(out / f"horizon_Ra{Ra:g}.csv", hrows)
    if write:
        output.write_manifest(out / "manifest.txt", config,
                              {"eps": results[-1].eps if results else None})
    return results
