"""Bred-vector generation of initial perturbation pairs.

A field (first velocity component, second velocity component, or
temperature) of a control state is offset by a constant on its free dofs, and
both runs are advanced together. After each interval the difference in that
field is rescaled to L2 norm ``eps`` and the perturbed run is restarted from
the control run plus the rescaled difference. The final rescaled difference
is the bred vector.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .ensemble import EnsembleSolver, EnsembleState

FIELDS = ("u1", "u2", "T")


class BreedingError(RuntimeError):
    pass


@dataclasses.dataclass(frozen=True)
class BredVectorConfig:
    """``eps`` holds one magnitude per field in :data:`FIELDS`; ``None`` draws them from ``seed``."""

    delta_t: float = 1e-3
    k_star: int = 5
    seed: int = 0
    eps: tuple | None = None

    def magnitudes(self) -> np.ndarray:
        if self.eps is None:
            rng = np.random.default_rng(self.seed)
            eps = rng.uniform(0.0, 0.01, size=3)
            while np.any(eps == 0.0):
                eps = rng.uniform(0.0, 0.01, size=3)
        else:
            eps = np.asarray(self.eps, dtype=float)
        if eps.shape != (3,) or np.any(eps <= 0.0) or np.any(eps >= 0.01):
            raise ValueError(f"perturbation magnitudes must lie in (0, 0.01), got {eps}")
        return eps

    def validate(self, dt: float) -> None:
        if self.k_star < 1:
            raise ValueError("k_star must be at least 1")
        if self.delta_t < dt * (1 - 1e-12):
            raise ValueError(f"reinitialization interval {self.delta_t} is shorter than dt={dt}")


@dataclasses.dataclass
class BredVectors:
    """Bred vectors keyed ``(field, sign)`` and the magnitudes they were normalised to."""

    vectors: dict
    eps: np.ndarray

    def __getitem__(self, key) -> np.ndarray:
        return self.vectors[key]


def get_field(state: EnsembleState, name: str, n: int) -> np.ndarray:
    if name == "u1":
        return state.u[0, :n]
    if name == "u2":
        return state.u[0, n:]
    if name == "T":
        return state.T[0]
    raise KeyError(name)


def with_field(state: EnsembleState, name: str, values: np.ndarray, n: int) -> EnsembleState:
    out = state.copy()
    if name == "u1":
        out.u[0, :n] = values
    elif name == "u2":
        out.u[0, n:] = values
    else:
        out.T[0] = values
    return out


def free_mask(solver: EnsembleSolver, name: str) -> np.ndarray:
    lay = solver.layout
    if name == "T":
        return ~lay.temperature_fixed
    comp = 0 if name == "u1" else 1
    return ~lay.velocity_fixed[comp * lay.n_nodes:(comp + 1) * lay.n_nodes]


def breed(solver: EnsembleSolver, control: EnsembleState, config: BredVectorConfig) -> BredVectors:
    """Bred vectors for every field and sign.

    ``solver`` must accept single-member states. The sign enters through the
    initial offset; rescaling always uses the magnitude, so the two vectors of
    a pair point in (nearly) opposite directions.
    """
    if control.J != 1:
        raise ValueError("breeding runs on a single control member")
    config.validate(control.dt)
    eps = config.magnitudes()
    n = solver.layout.n_nodes
    mass = solver.layout.mass_p2

    controls = [control]
    for _ in range(config.k_star):
        controls.append(solver.run(controls[-1], controls[-1].t + config.delta_t))

    out = {}
    for name, e in zip(FIELDS, eps):
        free = free_mask(solver, name)
        for sign in (1, -1):
            seeded = get_field(control, name, n) + sign * e * free
            perturbed = with_field(control, name, seeded, n)
            for k in range(1, config.k_star + 1):
                perturbed = solver.run(perturbed, controls[k].t)
                diff = get_field(perturbed, name, n) - get_field(controls[k], name, n)
                norm = float(np.sqrt(diff @ (mass @ diff)))
                if norm == 0.0:
                    raise BreedingError(f"zero separation for field {name} in cycle {k}; cannot rescale")
                bv = (e / norm) * diff
                perturbed = with_field(controls[k], name, get_field(controls[k], name, n) + bv, n)
            out[(name, sign)] = bv
    return BredVectors(out, eps)


def perturbed_initial_pair(solver: EnsembleSolver, base: EnsembleState, bred) -> EnsembleState:
    """Two-member state ``base + bv(+eps)`` and ``base + bv(-eps)`` with boundary data re-imposed."""
    if base.J != 1:
        raise ValueError("base state must have a single member")
    n = solver.layout.n_nodes
    members = []
    for sign in (1, -1):
        m = base
        for name in FIELDS:
            m = with_field(m, name, get_field(m, name, n) + bred[(name, sign)], n)
        members.append(m)
    pair = EnsembleState(
        u=np.vstack([m.u for m in members]), T=np.vstack([m.T for m in members]),
        p=np.vstack([m.p for m in members]), t=base.t, dt=base.dt, halvings=base.halvings,
    )
    return solver.impose_boundary(pair)
