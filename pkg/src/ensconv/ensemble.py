"""Ensemble timestepping with one coefficient matrix per sub-problem and step.

Each member advances by a linearly implicit step in which only the ensemble
mean velocity is treated implicitly in the convection terms. The fluctuation
terms are lagged, so the temperature matrix and the velocity-pressure matrix
are the same for every member and are factorized once per step.

Thin wall: temperature and velocity solves both use time-n data and are
independent. Thick wall: temperature is solved first and the fresh
temperature drives the buoyancy in the velocity solve.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from . import assembly, linsolve
from .assembly import DofLayout, Role

log = logging.getLogger(__name__)


class SchemeKind(enum.Enum):
    THICK_WALL = "thick"
    THIN_WALL = "thin"


@dataclasses.dataclass(frozen=True)
class Scheme:
    kind: SchemeKind = SchemeKind.THIN_WALL
    include_u1_source: bool = True

    @property
    def thin_wall(self) -> bool:
        return self.kind is SchemeKind.THIN_WALL

    @property
    def u1_source(self) -> bool:
        return self.thin_wall and self.include_u1_source


@dataclasses.dataclass(frozen=True)
class Physics:
    Pr: float = 0.71
    Ra: float = 1e4
    kappa_f: float = 1.0
    kappa_s: float = 1.0
    gamma: tuple = (0.0, 1.0)

    def __post_init__(self):
        if self.Pr <= 0 or self.Ra < 0 or self.kappa_f <= 0 or self.kappa_s <= 0:
            raise ValueError(f"non-physical parameters: {self}")


class StabilityError(RuntimeError):
    pass


class SolverError(RuntimeError):
    pass


@dataclasses.dataclass
class EnsembleState:
    """Member coefficient vectors stacked row-wise: ``u (J, nu)``, ``T (J, nT)``, ``p (J, np)``."""

    u: np.ndarray
    T: np.ndarray
    p: np.ndarray
    t: float = 0.0
    dt: float = 1e-3
    halvings: int = 0

    def __post_init__(self):
        self.u = np.atleast_2d(np.asarray(self.u, dtype=float))
        self.T = np.atleast_2d(np.asarray(self.T, dtype=float))
        self.p = np.atleast_2d(np.asarray(self.p, dtype=float))
        if not (len(self.u) == len(self.T) == len(self.p)):
            raise ValueError("all fields need the same number of members")
        if self.dt <= 0:
            raise ValueError("timestep must be positive")

    @property
    def J(self) -> int:
        return len(self.u)

    def copy(self) -> "EnsembleState":
        return dataclasses.replace(self, u=self.u.copy(), T=self.T.copy(), p=self.p.copy())

    def member(self, j: int) -> "EnsembleState":
        return dataclasses.replace(self, u=self.u[j:j + 1].copy(), T=self.T[j:j + 1].copy(),
                                   p=self.p[j:j + 1].copy())


def ensemble_mean(state: EnsembleState):
    return state.u.mean(axis=0), state.T.mean(axis=0), state.p.mean(axis=0)


def fluctuation(state: EnsembleState, j: int) -> np.ndarray:
    """Velocity fluctuation of member ``j`` (0-based) about the ensemble mean."""
    if not 0 <= j < state.J:
        raise IndexError(f"member index {j} out of range for J={state.J}")
    return state.u[j] - state.u.mean(axis=0)


def gradient_energies(state: EnsembleState, stiffness: sp.spmatrix) -> np.ndarray:
    """``|grad u'_j|^2`` for every member, with ``stiffness`` the unit velocity stiffness."""
    up = state.u - state.u.mean(axis=0)
    return np.einsum("ji,ji->j", up, (stiffness @ up.T).T)


def check_stability(state: EnsembleState, h: float, stiffness: sp.spmatrix,
                    C_dagger: float = 1.0, dt: float | None = None):
    """Timestep condition ``C dt / h * max_j |grad u'_j|^2 <= 1``; returns ``(passed, lhs)``."""
    dt = state.dt if dt is None else dt
    lhs = C_dagger * dt / h * float(np.max(gradient_energies(state, stiffness)))
    return lhs <= 1.0, lhs


# forcing(j, x, y, t) -> (f of shape (2, ...) or None, g of shape (...) or None)
Forcing = Callable[[int, np.ndarray, np.ndarray, float], tuple]
# temperature_bc(j, x, y, t) -> Dirichlet values at the given nodes
BoundaryData = Callable[[int, np.ndarray, np.ndarray, float], np.ndarray]


@dataclasses.dataclass
class StepInfo:
    t: float
    dt: float
    stability_lhs: float
    mean_condition: float
    halvings: int
    div_residual: float
    increment_u: float
    increment_T: float
    factorizations: int


class EnsembleSolver:
    """Advances an :class:`EnsembleState` by the chosen scheme.

    ``temperature_offset`` (a P2 field) is added to the temperature when
    measuring relative increments; it lets a run in lifted variables report
    increments of the physical temperature.
    """

    def __init__(self, layout: DofLayout, scheme: Scheme, physics: Physics,
                 forcing: Optional[Forcing] = None, temperature_bc: Optional[BoundaryData] = None,
                 C_dagger: float = 1.0, max_halvings: int = 30,
                 temperature_offset: np.ndarray | None = None):
        self.layout = layout
        self.scheme = scheme
        self.physics = physics
        self.forcing = forcing
        self.temperature_bc = temperature_bc
        self.C_dagger = C_dagger
        self.max_halvings = max_halvings
        self.h = layout.mesh.h
        self.temperature_offset = temperature_offset
        self.log: list[StepInfo] = []

        n = layout.n_nodes
        self.mass_T = layout.mass_p2
        self.mass_u = assembly.assemble_mass(layout, Role.VELOCITY)
        self.mass_uf = self.mass_u[:n, :n]
        coef = {0: physics.kappa_f, 1: physics.kappa_s}
        self.stiff_T = assembly.assemble_stiffness(layout, Role.TEMPERATURE, coef)
        self.stiff_uf = assembly.assemble_stiffness(layout, Role.VELOCITY, 1.0)[:n, :n]
        self.stiff_monitor = sp.block_diag((layout.stiffness_p2, layout.stiffness_p2), format="csr")
        self.div = assembly.assemble_divergence(layout)
        self.div_blocks = (self.div[:, :n], self.div[:, n:])
        self.buoyancy = physics.Pr * physics.Ra * assembly.assemble_buoyancy(layout, physics.gamma)
        self.u1_source = assembly.assemble_u1_source(layout) if scheme.u1_source else None

        self.fixed_up = np.concatenate([layout.velocity_fixed, ~layout.pressure_active])
        self.fixed_up[layout.n_velocity + layout.pressure_pin] = True
        self.fixed_T = layout.temperature_fixed
        self._bc_nodes = layout.nodes[self.fixed_T]

    # -- per-member data -------------------------------------------------
    def _loads(self, J: int, t: float):
        zero_u = np.zeros((J, self.layout.n_velocity))
        zero_T = np.zeros((J, self.layout.n_temperature))
        if self.forcing is None:
            return zero_u, zero_T
        q = self.layout.quad()
        x, y = q.points[..., 0], q.points[..., 1]
        for j in range(J):
            f, g = self.forcing(j, x, y, t)
            if f is not None:
                zero_u[j] = assembly.load_vector(self.layout, np.moveaxis(np.asarray(f), 0, -1))
            if g is not None:
                zero_T[j] = assembly.load_vector(self.layout, np.asarray(g))
        return zero_u, zero_T

    def temperature_boundary_values(self, J: int, t: float) -> np.ndarray:
        vals = np.zeros((J, int(self.fixed_T.sum())))
        if self.temperature_bc is not None:
            x, y = self._bc_nodes.T
            for j in range(J):
                vals[j] = self.temperature_bc(j, x, y, t)
        return vals

    def impose_boundary(self, state: EnsembleState) -> EnsembleState:
        """Return a copy with velocity no-slip and temperature Dirichlet data imposed."""
        out = state.copy()
        out.u[:, self.layout.velocity_fixed] = 0.0
        out.T[:, self.fixed_T] = self.temperature_boundary_values(state.J, state.t)
        out.p[:, ~self.layout.pressure_active] = 0.0
        return out

    # -- stepping --------------------------------------------------------
    def _accept_dt(self, state: EnsembleState):
        dt, halvings = state.dt, state.halvings
        energies = gradient_energies(state, self.stiff_monitor)
        lhs = self.C_dagger * dt / self.h * float(energies.max())
        while lhs > 1.0:
            if halvings - state.halvings >= self.max_halvings:
                raise StabilityError(
                    f"timestep condition still violated after {self.max_halvings} halvings "
                    f"at t={state.t:.6g} (lhs={lhs:.3g})")
            dt *= 0.5
            halvings += 1
            lhs *= 0.5
            log.info("timestep condition violated; halving dt to %.6g", dt)
        mean_cond = state.J * self.C_dagger * dt / self.h * float(energies.mean())
        return dt, halvings, lhs, mean_cond

    def step(self, state: EnsembleState, t_end: float | None = None) -> EnsembleState:
        lay = self.layout
        n = lay.n_nodes
        J = state.J
        dt, halvings, lhs, mean_cond = self._accept_dt(state)
        step_dt = dt if t_end is None else min(dt, t_end - state.t)
        t_new = state.t + step_dt
        count0 = linsolve.counter.count

        u_mean = state.u.mean(axis=0)
        conv = assembly.convection_scalar(lay, u_mean)
        # lagged fluctuation terms b(u'_j, u_j, .) and b*(u'_j, T_j, .)
        lagged_u = np.zeros((J, lay.n_velocity))
        lagged_T = np.zeros((J, n))
        if J > 1:
            for j in range(J):
                fields = np.vstack([state.u[j, :n], state.u[j, n:], state.T[j]])
                r = assembly.convection_action(lay, state.u[j] - u_mean, fields)
                lagged_u[j] = r[:2].ravel()
                lagged_T[j] = r[2]
        load_u, load_T = self._loads(J, t_new)

        # temperature
        a_T = (self.mass_T / step_dt + self.stiff_T + conv).tocsr()
        rhs_T = (self.mass_T @ state.T.T).T / step_dt - lagged_T + load_T
        if self.u1_source is not None:
            rhs_T += (self.u1_source @ state.u.T).T
        bc = np.zeros((J, n))
        bc[:, self.fixed_T] = self.temperature_boundary_values(J, t_new)
        a_T, rhs_T = assembly.apply_dirichlet(a_T, rhs_T.T, self.fixed_T, bc.T)
        T_new = linsolve.solve_many(linsolve.factorize(a_T, stamp=t_new), rhs_T.T)
        self._check_finite(T_new, "temperature", t_new)

        # velocity-pressure
        T_drive = T_new if self.scheme.kind is SchemeKind.THICK_WALL else state.T
        f_blk = (self.mass_uf / step_dt + self.physics.Pr * self.stiff_uf + conv).tocsr()
        d1, d2 = self.div_blocks
        k = sp.bmat([[f_blk, None, -d1.T], [None, f_blk, -d2.T], [-d1, -d2, None]], format="csr")
        rhs_u = (self.mass_u @ state.u.T).T / step_dt - lagged_u + (self.buoyancy @ T_drive.T).T + load_u
        rhs = np.hstack([rhs_u, np.zeros((J, lay.n_pressure))])
        k, rhs = assembly.apply_dirichlet(k, rhs.T, self.fixed_up, np.zeros(len(self.fixed_up)))
        sol = linsolve.solve_many(linsolve.factorize(k, stamp=t_new), rhs.T)
        self._check_finite(sol, "velocity/pressure", t_new)
        u_new = sol[:, : lay.n_velocity]
        p_new = zero_mean_pressure(lay, sol[:, lay.n_velocity:])

        info = StepInfo(
            t=t_new, dt=step_dt, stability_lhs=lhs, mean_condition=mean_cond, halvings=halvings,
            div_residual=self.divergence_residual(u_new),
            increment_u=self._rel_increment(u_new, state.u, self.mass_u, None),
            increment_T=self._rel_increment(T_new, state.T, self.mass_T, self.temperature_offset),
            factorizations=linsolve.counter.count - count0,
        )
        self.log.append(info)
        return EnsembleState(u=u_new, T=T_new, p=p_new, t=t_new, dt=dt, halvings=halvings)

    @staticmethod
    def _check_finite(x: np.ndarray, what: str, t: float) -> None:
        bad = ~np.all(np.isfinite(x), axis=1)
        if np.any(bad):
            raise SolverError(f"non-finite {what} in member {int(np.flatnonzero(bad)[0])} at t={t:.6g}")

    @staticmethod
    def _rel_increment(new, old, mass, offset) -> float:
        diff = new - old
        ref = new if offset is None else new + offset
        num = np.sqrt(np.einsum("ji,ji->j", diff, (mass @ diff.T).T))
        den = np.sqrt(np.einsum("ji,ji->j", ref, (mass @ ref.T).T))
        rel = np.where(den > 0, num / np.where(den > 0, den, 1.0), num)
        return float(rel.max())

    def divergence_residual(self, u: np.ndarray) -> float:
        """``max_j |B u_j| / (1 + |u_j|)``."""
        u = np.atleast_2d(u)
        bu = np.linalg.norm((self.div @ u.T).T, axis=1)
        nu = np.sqrt(np.einsum("ji,ji->j", u, (self.mass_u @ u.T).T))
        return float(np.max(bu / (1.0 + nu)))

    def run(self, state: EnsembleState, t_end: float, callback=None) -> EnsembleState:
        """Step until ``t_end``; the last step is shortened to land on it exactly."""
        eps = 1e-9 * max(state.dt, 1e-300)
        while state.t < t_end - eps:
            state = self.step(state, t_end=t_end)
            if callback is not None:
                callback(state)
        return state

    def run_to_steady(self, state: EnsembleState, tolerance: float, max_steps: int = 100000,
                      callback=None):
        """Step until every member's relative increments fall below ``tolerance``.

        Returns ``(state, steps, converged)``.
        """
        if tolerance < 0:
            raise ValueError("tolerance must be non-negative")
        for steps in range(1, max_steps + 1):
            state = self.step(state)
            if callback is not None:
                callback(state)
            info = self.log[-1]
            if max(info.increment_u, info.increment_T) < tolerance:
                return state, steps, True
        log.warning("no steady state after %d steps", max_steps)
        return state, max_steps, False


def zero_mean_pressure(layout: DofLayout, p: np.ndarray) -> np.ndarray:
    """Shift fluid pressure dofs (rows of ``p``) to zero discrete mean over the fluid."""
    m = layout.mass_p1
    ones = layout.pressure_active.astype(float)
    mean = (p @ (m @ ones)) / (ones @ m @ ones)
    return p - np.multiply.outer(mean, ones)
