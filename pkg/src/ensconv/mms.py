"""Manufactured solution on the unit square and its derived forcings.

With ``X(s) = Y(s) = s^2 (s-1)^2`` and streamfunction ``psi = 5 X(x) Y(y) cos t``::

    u = (psi_y, -psi_x) = (10 x^2 (x-1)^2 y (y-1)(2y-1), -10 x (x-1)(2x-1) y^2 (y-1)^2) cos t
    T = u1 + u2
    p = 10 (2x-1)(2y-1) cos t

so ``div u = 0`` identically and ``u = T = 0`` on the boundary. A perturbed
member is the same triple scaled by ``1 + eps``.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import Polynomial

from . import assembly, linsolve
from .assembly import DofLayout, Role
from .ensemble import Physics, zero_mean_pressure

_Q = Polynomial([0.0, 0.0, 1.0, -2.0, 1.0])  # s^2 (s-1)^2
_D = [_Q.deriv(k) if k else _Q for k in range(4)]


@dataclasses.dataclass(frozen=True)
class ManufacturedSolution:
    scale: float = 1.0

    def perturbed_member(self, eps: float) -> "ManufacturedSolution":
        if abs(eps) >= 1.0:
            raise ValueError("perturbation must satisfy |eps| < 1")
        return ManufacturedSolution(self.scale * (1.0 + eps))

    def _unit(self, x, y, t):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        X = [d(x) for d in _D]
        Y = [d(y) for d in _D]
        c, s = np.cos(t), -np.sin(t)
        u = np.array([5 * X[0] * Y[1], -5 * X[1] * Y[0]])
        # grad_u[c, d] = d u_c / d x_d
        grad_u = np.array([[5 * X[1] * Y[1], 5 * X[0] * Y[2]],
                           [-5 * X[2] * Y[0], -5 * X[1] * Y[1]]])
        lap_u = np.array([5 * X[2] * Y[1] + 5 * X[0] * Y[3],
                          -5 * X[3] * Y[0] - 5 * X[1] * Y[2]])
        p = 10 * (2 * x - 1) * (2 * y - 1)
        grad_p = np.array([20 * (2 * y - 1), 20 * (2 * x - 1)])
        return {
            "u": u * c, "u_t": u * s, "grad_u": grad_u * c, "lap_u": lap_u * c,
            "T": (u[0] + u[1]) * c, "T_t": (u[0] + u[1]) * s,
            "grad_T": (grad_u[0] + grad_u[1]) * c, "lap_T": (lap_u[0] + lap_u[1]) * c,
            "p": p * c, "grad_p": grad_p * c,
        }

    def fields(self, x, y, t) -> dict:
        return {k: self.scale * v for k, v in self._unit(x, y, t).items()}

    def velocity(self, x, y, t):
        return self.fields(x, y, t)["u"]

    def temperature(self, x, y, t):
        return self.fields(x, y, t)["T"]

    def pressure(self, x, y, t):
        return self.fields(x, y, t)["p"]

    def forcing(self, thin_wall: bool, x, y, t, physics: Physics):
        """Body force ``f`` (shape ``(2, ...)``) and heat source ``g`` making these fields exact.

        The nonlinear terms carry ``scale**2``, the linear ones ``scale``.
        """
        F = self._unit(x, y, t)
        s = self.scale
        gamma = np.asarray(physics.gamma, dtype=float).reshape((2,) + (1,) * np.ndim(F["T"]))
        adv_u = np.einsum("d...,cd...->c...", F["u"], F["grad_u"])
        adv_T = np.einsum("d...,d...->...", F["u"], F["grad_T"])
        f = s * (F["u_t"] - physics.Pr * F["lap_u"] + F["grad_p"]
                 - physics.Pr * physics.Ra * gamma * F["T"]) + s * s * adv_u
        lin = F["T_t"] - physics.kappa_f * F["lap_T"]
        if thin_wall:
            lin = lin - F["u"][0]
        g = s * lin + s * s * adv_T
        return f, g


def stokes_projection(layout: DofLayout, solution: ManufacturedSolution, t: float):
    """Discrete Stokes projection of ``(u, p)`` at time ``t``.

    The projected velocity is discretely divergence-free, so a run started
    from it carries no spurious initial pressure transient.
    """
    q = layout.quad()
    F = solution.fields(q.points[..., 0], q.points[..., 1], t)
    body = -F["lap_u"] + F["grad_p"]
    rhs_u = assembly.load_vector(layout, np.moveaxis(body, 0, -1))
    a = assembly.assemble_stiffness(layout, Role.VELOCITY, 1.0)
    b = assembly.assemble_divergence(layout)
    k = sp.bmat([[a, -b.T], [-b, None]], format="csr")
    fixed = np.concatenate([layout.velocity_fixed, ~layout.pressure_active])
    fixed[layout.n_velocity + layout.pressure_pin] = True
    rhs = np.concatenate([rhs_u, np.zeros(layout.n_pressure)])
    k, rhs = assembly.apply_dirichlet(k, rhs, fixed, np.zeros(len(rhs)))
    x = linsolve.factorize(k).solve(rhs)
    u, p = x[: layout.n_velocity], x[layout.n_velocity:]
    return u, zero_mean_pressure(layout, p)


def interpolated_temperature(layout: DofLayout, solution: ManufacturedSolution, t: float):
    x, y = layout.nodes.T
    return solution.temperature(x, y, t)


def error_norms(layout: DofLayout, u_h, T_h, p_h, solution: ManufacturedSolution, t: float,
                order: int = 8) -> dict:
    """L2 and H1-seminorm errors of discrete fields against the exact ones."""
    q = layout.quad(order)
    F = solution.fields(q.points[..., 0], q.points[..., 1], t)
    cn = layout.cell_nodes
    u2 = layout.split_velocity(np.asarray(u_h))
    uq = np.einsum("cek,qk->ceq", u2[:, cn], q.phi)
    guq = np.einsum("cek,eqkd->cdeq", u2[:, cn], q.grad)
    Tq = np.einsum("ek,qk->eq", np.asarray(T_h)[cn], q.phi)
    gTq = np.einsum("ek,eqkd->deq", np.asarray(T_h)[cn], q.grad)
    pq = np.einsum("ek,qk->eq", np.asarray(p_h)[layout.mesh.triangles], q.psi)

    def l2(err):
        return float(np.sqrt(np.sum(q.wdet * np.sum(err ** 2, axis=tuple(range(err.ndim - 2))))))

    return {
        "u_l2": l2(uq - F["u"]),
        "u_h1": l2(guq - F["grad_u"]),
        "T_l2": l2((Tq - F["T"])[None]),
        "T_h1": l2(gTq - F["grad_T"]),
        "p_l2": l2((pq - F["p"])[None]),
    }
