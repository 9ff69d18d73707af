"""Scalar outputs: energies, ensemble spread, growth rates, wall heat flux, error norms."""

from __future__ import annotations

import dataclasses
import enum

import numpy as np
import scipy.sparse as sp

from . import elements
from .assembly import DofLayout
from .mesh import Side


class UndefinedQuantity(ValueError):
    """Raised when a diagnostic is undefined for the given input (zero norms, zero rates)."""


# -- norms and ensemble statistics -------------------------------------------

def l2_norm(vec: np.ndarray, mass: sp.spmatrix) -> np.ndarray:
    """L2 norm of each row of ``vec`` under ``mass``."""
    vec = np.asarray(vec, dtype=float)
    if vec.ndim == 1:
        return float(np.sqrt(max(vec @ (mass @ vec), 0.0)))
    return np.sqrt(np.maximum(np.einsum("ji,ji->j", vec, (mass @ vec.T).T), 0.0))


def velocity_mass(layout: DofLayout) -> sp.csr_matrix:
    return sp.block_diag((layout.mass_p2, layout.mass_p2), format="csr")


def energy(u, T, layout: DofLayout, symmetric: bool = False):
    """``|T| + |u|^2 / 2``; with ``symmetric=True`` the temperature term is ``|T|^2 / 2`` instead."""
    nu = l2_norm(u, velocity_mass(layout))
    nT = l2_norm(T, layout.mass_p2)
    t_term = 0.5 * np.square(nT) if symmetric else nT
    return t_term + 0.5 * np.square(nu)


def variance(members: np.ndarray, mass: sp.spmatrix) -> float:
    """Ensemble variance as the mean squared norm of the fluctuations."""
    members = np.atleast_2d(members)
    fluct = members - members.mean(axis=0)
    return float(np.mean(np.square(l2_norm(fluct, mass))))


def variance_moment_form(members: np.ndarray, mass: sp.spmatrix) -> float:
    """Same quantity as ``<|chi|^2> - |<chi>|^2``; prone to cancellation, used as a cross-check."""
    members = np.atleast_2d(members)
    return float(np.mean(np.square(l2_norm(members, mass))) - l2_norm(members.mean(axis=0), mass) ** 2)


def relative_energy_fluctuation(plus, minus, mass: sp.spmatrix) -> float:
    """``|chi+ - chi-|^2 / (|chi+| |chi-|)``."""
    np_, nm = l2_norm(plus, mass), l2_norm(minus, mass)
    if np_ == 0.0 or nm == 0.0:
        raise UndefinedQuantity("relative energy fluctuation needs two nonzero members")
    d = np.asarray(plus) - np.asarray(minus)
    return l2_norm(d, mass) ** 2 / (np_ * nm)


def effective_lyapunov(r_t: float, r_t_tau: float, tau: float) -> float:
    """Average effective growth rate ``log(r(t+tau) / r(t)) / (2 tau)``."""
    if r_t <= 0.0 or r_t_tau <= 0.0:
        raise UndefinedQuantity("separation ratio must be positive")
    if tau <= 0.0:
        raise UndefinedQuantity("averaging window must be positive")
    return float(np.log(r_t_tau / r_t) / (2.0 * tau))


def lyapunov_curve(times, r, window: float | None = None):
    """Growth-rate curve from a sampled ``r(t)``.

    With ``window=None`` the value at ``t`` averages over ``[t, t*]`` (the
    remaining horizon), so the first entry is the whole-run exponent. With a
    positive ``window`` it averages over ``[t, t + window]``. Returns
    ``(t, gamma)`` for every sample where the window fits.
    """
    times = np.asarray(times, dtype=float)
    r = np.asarray(r, dtype=float)
    t_end = times[-1]
    ts, gs = [], []
    for i, t in enumerate(times):
        if window is None:
            tau, k = t_end - t, len(times) - 1
        else:
            k = int(np.searchsorted(times, t + window - 1e-12 * max(window, 1.0)))
            if k >= len(times):
                break
            tau = times[k] - t
        if tau <= 0.0:
            continue
        ts.append(t)
        gs.append(effective_lyapunov(r[i], r[k], tau))
    return np.array(ts), np.array(gs)


def predictability_horizon(gamma_ref: float, delta, initial_separation: float):
    """``log(delta / |chi+ - chi-|(0)) / gamma``; negative values are returned as they are."""
    if gamma_ref == 0.0:
        raise UndefinedQuantity("growth rate is zero; horizon undefined")
    if initial_separation <= 0.0:
        raise UndefinedQuantity("initial separation must be positive")
    delta = np.asarray(delta, dtype=float)
    if np.any(delta <= 0.0):
        raise UndefinedQuantity("tolerance delta must be positive")
    return np.log(delta / initial_separation) / gamma_ref


def discrete_norms(step_norms, dt: float, p: float = 2.0):
    """``(dt * sum |v^n|^p)^(1/p)`` and ``max_n |v^n|`` for a series of per-step norms."""
    s = np.abs(np.asarray(step_norms, dtype=float))
    if s.size == 0:
        raise ValueError("empty series")
    return float((dt * np.sum(s ** p)) ** (1.0 / p)), float(s.max())


def convergence_rate(e1: float, e2: float, param1: float, param2: float) -> float:
    """Observed order between two runs, positive when the error drops from the first to the second.

    ``log2(e1/e2) / |log2(param1/param2)|``; for mesh counts ``m`` or inverse
    timesteps this matches the tabulated rates.
    """
    if e1 <= 0.0 or e2 <= 0.0:
        raise UndefinedQuantity("errors must be positive")
    if param1 <= 0.0 or param2 <= 0.0 or param1 == param2:
        raise UndefinedQuantity("resolution parameters must be positive and distinct")
    return float(np.log2(e1 / e2) / abs(np.log2(param1 / param2)))


# -- point evaluation ---------------------------------------------------------

def locate(layout: DofLayout, points: np.ndarray, chunk: int = 256):
    """Containing cell and reference coordinates for each point (brute force, chunked)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    origin, _, _, inv_t = elements.jacobians(layout.mesh.vertices, layout.mesh.triangles)
    inv = inv_t.transpose(0, 2, 1)
    cells = np.empty(len(points), dtype=np.int64)
    refs = np.empty((len(points), 2))
    for s in range(0, len(points), chunk):
        pts = points[s:s + chunk]
        ref = np.einsum("eab,peb->pea", inv, pts[:, None, :] - origin[None])
        lam_min = np.minimum(np.minimum(ref[..., 0], ref[..., 1]), 1.0 - ref.sum(axis=-1))
        best = np.argmax(lam_min, axis=1)
        if np.any(lam_min[np.arange(len(pts)), best] < -1e-10):
            raise ValueError("point outside the mesh")
        cells[s:s + chunk] = best
        refs[s:s + chunk] = ref[np.arange(len(pts)), best]
    return cells, refs


def evaluate_p2(layout: DofLayout, coeffs: np.ndarray, points: np.ndarray, gradient: bool = False):
    cells, refs = locate(layout, points)
    vals, grads = elements.basis(2, refs)
    local = np.asarray(coeffs)[layout.cell_nodes[cells]]
    if not gradient:
        return np.einsum("pk,pk->p", vals, local)
    _, _, _, inv_t = elements.jacobians(layout.mesh.vertices, layout.mesh.triangles)
    g = np.einsum("pab,pkb->pka", inv_t[cells], grads)
    return np.einsum("pka,pk->pa", g, local)


# -- benchmark functionals ----------------------------------------------------

class Wall(enum.Enum):
    HOT_X0 = "hot"
    COLD_X1 = "cold"


class Midline(enum.Enum):
    HORIZONTAL_AT_X_HALF = "u1_x_half"
    VERTICAL_AT_Y_HALF = "u2_y_half"


def _require_unit_square(layout: DofLayout) -> None:
    v = layout.mesh.vertices
    if not (np.allclose(v.min(axis=0), 0.0) and np.allclose(v.max(axis=0), 1.0)):
        raise ValueError("benchmark functionals need the unit-square domain")


def _boundary_edge_cells(layout: DofLayout) -> np.ndarray:
    tri = layout.mesh.triangles
    nv = layout.n_vertices
    keys = np.sort(np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1)
    flat = keys[:, 0].astype(np.int64) * nv + keys[:, 1]
    owner = np.tile(np.arange(len(tri)), 3)
    order = np.argsort(flat)
    b = np.sort(layout.mesh.boundary_edges, axis=1)
    pos = np.searchsorted(flat[order], b[:, 0].astype(np.int64) * nv + b[:, 1])
    return owner[order][pos]


def nusselt(layout: DofLayout, T: np.ndarray, wall: Wall, n_gauss: int = 3):
    """Local and average Nusselt numbers on a vertical wall.

    The local value is ``-dT/dx`` taken one-sided from the wall cells, which is
    the wall-normal heat flux measured hot to cold (1 for pure conduction on
    both walls). Returns ``(y, nu_local, nu_avg)`` with samples sorted in ``y``.
    """
    _require_unit_square(layout)
    side = Side.LEFT if wall is Wall.HOT_X0 else Side.RIGHT
    on_wall = layout.mesh.edge_side() == side.value
    edges = layout.mesh.boundary_edges[on_wall]
    cells = _boundary_edge_cells(layout)[on_wall]
    g, w = np.polynomial.legendre.leggauss(n_gauss)
    a, b = layout.mesh.vertices[edges[:, 0]], layout.mesh.vertices[edges[:, 1]]
    s = 0.5 * (g + 1.0)
    pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]  # (nb, ng, 2)
    origin, _, _, inv_t = elements.jacobians(layout.mesh.vertices, layout.mesh.triangles)
    ref = np.einsum("eab,ega->egb", inv_t[cells], pts - origin[cells][:, None, :])
    _, grads = elements.basis(2, ref)  # (nb, ng, 6, 2)
    phys = np.einsum("eab,egkb->egka", inv_t[cells], grads)
    local = np.asarray(T)[layout.cell_nodes[cells]]
    dTdx = np.einsum("egk,ek->eg", phys[..., 0], local)
    nu_local = -dTdx
    length = np.linalg.norm(b - a, axis=1)
    nu_avg = float(np.sum(0.5 * length[:, None] * w[None, :] * nu_local))
    y = pts[..., 1].ravel()
    order = np.argsort(y)
    return y[order], nu_local.ravel()[order], nu_avg


def midline_max_velocity(layout: DofLayout, u: np.ndarray, line: Midline, n_samples: int | None = None):
    """Maximum of ``u1`` along ``x = 1/2`` or of ``u2`` along ``y = 1/2`` over dense sampling."""
    _require_unit_square(layout)
    m = layout.mesh.m or int(round(np.sqrt(2.0) / layout.mesh.h))
    n_samples = n_samples or 20 * m + 1
    s = np.linspace(0.0, 1.0, n_samples)
    u2 = layout.split_velocity(np.asarray(u, dtype=float))
    if line is Midline.HORIZONTAL_AT_X_HALF:
        pts = np.column_stack([np.full_like(s, 0.5), s])
        vals = evaluate_p2(layout, u2[0], pts)
    else:
        pts = np.column_stack([s, np.full_like(s, 0.5)])
        vals = evaluate_p2(layout, u2[1], pts)
    return float(vals.max())


@dataclasses.dataclass
class DiagnosticsRecord:
    """One row of a run's per-step diagnostics table."""

    t: float
    dt: float
    energy_mean: float
    energy_members: tuple
    norm_u_mean: float
    norm_T_mean: float
    grad_fluct_max: float
    separation_u: float
    separation_T: float
    variance_u: float
    variance_T: float
    nu_avg: float = float("nan")
    energy_reference: float = float("nan")

    def as_row(self) -> dict:
        row = dataclasses.asdict(self)
        members = row.pop("energy_members")
        for j, e in enumerate(members):
            row[f"energy_member{j}"] = e
        return row


def record(layout: DofLayout, state, stiffness_u: sp.spmatrix, temperature_offset=None,
           symmetric_energy: bool = False, reference=None, with_nusselt: bool = False) -> DiagnosticsRecord:
    """Diagnostics of an ensemble state; ``reference`` is an optional unperturbed single-member state."""
    mu = velocity_mass(layout)
    mT = layout.mass_p2
    T = state.T if temperature_offset is None else state.T + temperature_offset
    u_mean, T_mean = state.u.mean(axis=0), T.mean(axis=0)
    fl = state.u - u_mean
    grad_fl = np.einsum("ji,ji->j", fl, (stiffness_u @ fl.T).T)
    sep_u = l2_norm(state.u[0] - state.u[-1], mu)
    sep_T = l2_norm(T[0] - T[-1], mT)
    rec = DiagnosticsRecord(
        t=state.t, dt=state.dt,
        energy_mean=float(energy(u_mean, T_mean, layout, symmetric_energy)),
        energy_members=tuple(float(e) for e in energy(state.u, T, layout, symmetric_energy)),
        norm_u_mean=l2_norm(u_mean, mu), norm_T_mean=l2_norm(T_mean, mT),
        grad_fluct_max=float(grad_fl.max()), separation_u=sep_u, separation_T=sep_T,
        variance_u=variance(state.u, mu), variance_T=variance(T, mT),
    )
    if with_nusselt:
        rec.nu_avg = nusselt(layout, T_mean, Wall.HOT_X0)[2]
    if reference is not None:
        T_ref = reference.T[0] if temperature_offset is None else reference.T[0] + temperature_offset
        rec.energy_reference = float(energy(reference.u[0], T_ref, layout, symmetric_energy))
    return rec
