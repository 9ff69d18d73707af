"""Taylor-Hood (P2 velocity, P1 pressure, P2 temperature) operators.

Global P2 node numbering: mesh vertices first, then edge midpoints. Velocity
coefficients are blocked by component, ``[u1 nodes..., u2 nodes...]``.

All element integrals use a degree-5 rule, which integrates the trilinear
convection integrand P2 * grad P2 * P2 exactly.
"""

from __future__ import annotations

import enum
import functools

import numpy as np
import scipy.sparse as sp

from . import elements
from .mesh import Region, Tag, TriMesh


class Role(enum.Enum):
    VELOCITY = "velocity"
    PRESSURE = "pressure"
    TEMPERATURE = "temperature"


class QuadData:
    """Basis data at the quadrature points of every cell, for one rule."""

    def __init__(self, layout: "DofLayout", order: int):
        rule = elements.quadrature(order)
        origin, jac, det, inv_t = elements.jacobians(layout.mesh.vertices, layout.mesh.triangles)
        self.phi, dphi = elements.basis(2, rule.points)  # (Q,6), (Q,6,2)
        self.psi, _ = elements.basis(1, rule.points)  # (Q,3)
        self.grad = np.einsum("eab,qib->eqia", inv_t, dphi)  # (E,Q,6,2)
        self.wdet = rule.weights[None, :] * det[:, None]  # (E,Q)
        self.points = origin[:, None, :] + np.einsum("eab,qb->eqa", jac, rule.points)
        self.det = det


class Pattern:
    """Fixed CSR structure for element contributions ``(E, a, b)``.

    ``assemble`` sums local values into the structure with one bincount.
    """

    def __init__(self, row_map: np.ndarray, col_map: np.ndarray, shape):
        rows = np.broadcast_to(row_map[:, :, None], (len(row_map), row_map.shape[1], col_map.shape[1]))
        cols = np.broadcast_to(col_map[:, None, :], rows.shape)
        ncol = shape[1]
        keys = rows.astype(np.int64).ravel() * ncol + cols.ravel()
        uniq, self.inverse = np.unique(keys, return_inverse=True)
        self.inverse = self.inverse.ravel()
        self.indices = (uniq % ncol).astype(np.int32)
        counts = np.bincount(uniq // ncol, minlength=shape[0])
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        self.shape = shape
        self.nnz = len(uniq)

    def assemble(self, local: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self.inverse, weights=local.ravel(), minlength=self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)


class DofLayout:
    """Degree-of-freedom bookkeeping and cached element geometry for a mesh."""

    def __init__(self, mesh: TriMesh):
        if np.any(mesh.tags == Tag.UNCLASSIFIED):
            raise ValueError("mesh boundary must be classified before building a layout")
        self.mesh = mesh
        tri = mesh.triangles
        nv = mesh.n_vertices
        local_edges = np.stack([tri[:, list(pair)] for pair in elements.OPPOSITE], axis=1)  # (E,3,2)
        keys = np.sort(local_edges.reshape(-1, 2), axis=1)
        self.edges, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = inverse.ravel().reshape(-1, 3)
        self.n_vertices = nv
        self.n_nodes = nv + len(self.edges)
        self.cell_nodes = np.concatenate([tri, nv + inverse], axis=1)  # (E,6)
        self.nodes = np.concatenate([mesh.vertices, mesh.vertices[self.edges].mean(axis=1)])

        self.fluid_cells = np.flatnonzero(mesh.region == Region.FLUID)
        self.solid_cells = np.flatnonzero(mesh.region == Region.SOLID)
        self.fluid_indicator = (mesh.region == Region.FLUID).astype(float)

        boundary_nodes = self._edge_nodes(mesh.boundary_edges)
        dirichlet_nodes = self._edge_nodes(mesh.edges_with_tag(Tag.GAMMA1_DIRICHLET_T))
        vel_fixed = np.zeros(self.n_nodes, dtype=bool)
        vel_fixed[boundary_nodes] = True
        vel_fixed[self.cell_nodes[self.solid_cells].ravel()] = True
        self.velocity_fixed = np.tile(vel_fixed, 2)
        self.temperature_fixed = np.zeros(self.n_nodes, dtype=bool)
        self.temperature_fixed[dirichlet_nodes] = True

        fluid_vertices = np.zeros(nv, dtype=bool)
        fluid_vertices[tri[self.fluid_cells].ravel()] = True
        self.pressure_active = fluid_vertices
        self.pressure_pin = int(np.flatnonzero(fluid_vertices)[0])
        self._quad: dict[int, QuadData] = {}

    def _edge_nodes(self, edge_pairs: np.ndarray) -> np.ndarray:
        if len(edge_pairs) == 0:
            return np.zeros(0, dtype=np.int64)
        keys = np.sort(edge_pairs, axis=1)
        # locate each boundary edge in the sorted global edge list
        flat = self.edges[:, 0].astype(np.int64) * self.n_vertices + self.edges[:, 1]
        idx = np.searchsorted(flat, keys[:, 0].astype(np.int64) * self.n_vertices + keys[:, 1])
        return np.unique(np.concatenate([edge_pairs.ravel(), self.n_vertices + idx]))

    @property
    def n_velocity(self) -> int:
        return 2 * self.n_nodes

    @property
    def n_pressure(self) -> int:
        return self.n_vertices

    @property
    def n_temperature(self) -> int:
        return self.n_nodes

    def size(self, role: Role) -> int:
        return {Role.VELOCITY: self.n_velocity, Role.PRESSURE: self.n_pressure,
                Role.TEMPERATURE: self.n_temperature}[role]

    def quad(self, order: int = 5) -> QuadData:
        if order not in self._quad:
            self._quad[order] = QuadData(self, order)
        return self._quad[order]

    @functools.cached_property
    def p2_pattern(self) -> Pattern:
        return Pattern(self.cell_nodes, self.cell_nodes, (self.n_nodes, self.n_nodes))

    @functools.cached_property
    def p1_pattern(self) -> Pattern:
        tri = self.mesh.triangles
        return Pattern(tri, tri, (self.n_vertices, self.n_vertices))

    @functools.cached_property
    def p1p2_pattern(self) -> Pattern:
        return Pattern(self.mesh.triangles, self.cell_nodes, (self.n_vertices, self.n_nodes))

    # cached unit-coefficient operators used by norms and diagnostics
    @functools.cached_property
    def mass_p2(self) -> sp.csr_matrix:
        return assemble_mass(self, Role.TEMPERATURE)

    @functools.cached_property
    def stiffness_p2(self) -> sp.csr_matrix:
        return assemble_stiffness(self, Role.TEMPERATURE, 1.0)

    @functools.cached_property
    def mass_p1(self) -> sp.csr_matrix:
        return assemble_mass(self, Role.PRESSURE)

    def split_velocity(self, u: np.ndarray) -> np.ndarray:
        """View a velocity vector (or stack of them) as ``(..., 2, n_nodes)``."""
        return u.reshape(u.shape[:-1] + (2, self.n_nodes))


def _cell_weights(layout: DofLayout, cells: str) -> np.ndarray:
    if cells == "fluid":
        return layout.fluid_indicator
    return np.ones(layout.mesh.n_triangles)


def _mass_local(layout: DofLayout) -> np.ndarray:
    q = layout.quad()
    return np.einsum("eq,qi,qj->eij", q.wdet, q.phi, q.phi)


def _stiffness_local(layout: DofLayout) -> np.ndarray:
    q = layout.quad()
    return np.einsum("eq,eqia,eqja->eij", q.wdet, q.grad, q.grad)


def _block2(a: sp.spmatrix) -> sp.csr_matrix:
    return sp.block_diag((a, a), format="csr")


def assemble_mass(layout: DofLayout, role: Role) -> sp.csr_matrix:
    """L2 mass matrix; velocity and pressure are integrated over the fluid only."""
    if role is Role.PRESSURE:
        q = layout.quad()
        local = np.einsum("eq,qi,qj->eij", q.wdet, q.psi, q.psi) * layout.fluid_indicator[:, None, None]
        return layout.p1_pattern.assemble(local)
    cells = "fluid" if role is Role.VELOCITY else "all"
    scalar = layout.p2_pattern.assemble(_mass_local(layout) * _cell_weights(layout, cells)[:, None, None])
    return _block2(scalar) if role is Role.VELOCITY else scalar


def _cellwise_coefficient(layout: DofLayout, coefficient) -> np.ndarray:
    region = layout.mesh.region
    if isinstance(coefficient, dict):
        kappa = np.empty(len(region))
        for reg in (Region.FLUID, Region.SOLID):
            if np.any(region == reg):
                kappa[region == reg] = float(coefficient[reg])
    else:
        kappa = np.broadcast_to(np.asarray(coefficient, dtype=float), region.shape).copy()
    if np.any(kappa <= 0.0):
        raise ValueError("diffusion coefficient must be positive on every region")
    return kappa


def assemble_stiffness(layout: DofLayout, role: Role, coefficient=1.0) -> sp.csr_matrix:
    """``(kappa grad u, grad v)``. ``coefficient`` is a scalar, per-cell array or {Region: value}."""
    if role is Role.PRESSURE:
        raise ValueError("no stiffness operator for the pressure space")
    kappa = _cellwise_coefficient(layout, coefficient)
    if role is Role.VELOCITY:
        kappa = kappa * layout.fluid_indicator
    scalar = layout.p2_pattern.assemble(_stiffness_local(layout) * kappa[:, None, None])
    return _block2(scalar) if role is Role.VELOCITY else scalar


def assemble_divergence(layout: DofLayout) -> sp.csr_matrix:
    """``B[i, j] = (q_i, div phi_j)`` with P1 rows and velocity columns."""
    q = layout.quad()
    blocks = []
    for c in range(2):
        local = np.einsum("eq,qi,eqj->eij", q.wdet, q.psi, q.grad[..., c])
        blocks.append(layout.p1p2_pattern.assemble(local * layout.fluid_indicator[:, None, None]))
    return sp.hstack(blocks, format="csr")


def _velocity_at_quad(layout: DofLayout, w: np.ndarray, q: QuadData) -> np.ndarray:
    w2 = layout.split_velocity(np.asarray(w, dtype=float))
    local = w2[:, layout.cell_nodes]  # (2,E,6)
    return np.einsum("cek,qk->eqc", local, q.phi)


def convection_local(layout: DofLayout, w: np.ndarray) -> np.ndarray:
    """Element matrices of the skew form, ``N[e,i,j] = b(w, phi_j, phi_i)``."""
    q = layout.quad()
    wq = _velocity_at_quad(layout, w, q)
    adv = np.einsum("eqc,eqjc->eqj", wq, q.grad)
    c = np.einsum("eq,qi,eqj->eij", q.wdet, q.phi, adv)
    return 0.5 * (c - c.transpose(0, 2, 1))


def convection_scalar(layout: DofLayout, w: np.ndarray) -> sp.csr_matrix:
    return layout.p2_pattern.assemble(convection_local(layout, w))


def assemble_convection(layout: DofLayout, w: np.ndarray, role: Role) -> sp.csr_matrix:
    """Matrix of ``v -> b(w, v, .)`` (velocity) or ``S -> b*(w, S, .)`` (temperature).

    Built as half the difference of the advection matrix and its transpose, so
    it is skew-symmetric to rounding.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (layout.n_velocity,):
        raise ValueError("advecting field must be a velocity vector")
    if role is Role.VELOCITY:
        return _block2(convection_scalar(layout, w))
    if role is Role.TEMPERATURE:
        return convection_scalar(layout, w)
    raise ValueError(f"no convection operator for role {role}")


def convection_action(layout: DofLayout, w: np.ndarray, fields: np.ndarray) -> np.ndarray:
    """``N(w) @ v`` for scalar P2 fields ``(k, n_nodes)`` without forming ``N(w)``."""
    q = layout.quad()
    fields = np.atleast_2d(fields)
    wq = _velocity_at_quad(layout, w, q)  # (E,Q,2)
    adv_phi = np.einsum("eqc,eqjc->eqj", wq, q.grad)  # w . grad phi_j
    local = fields[:, layout.cell_nodes]  # (k,E,6)
    vq = np.einsum("kej,qj->keq", local, q.phi)
    adv_v = np.einsum("kej,eqj->keq", local, adv_phi)
    r = 0.5 * (np.einsum("eq,qi,keq->kei", q.wdet, q.phi, adv_v)
               - np.einsum("eq,eqi,keq->kei", q.wdet, adv_phi, vq))
    out = np.zeros((len(fields), layout.n_nodes))
    flat = layout.cell_nodes.ravel()
    for k in range(len(fields)):
        out[k] = np.bincount(flat, weights=r[k].ravel(), minlength=layout.n_nodes)
    return out


def assemble_buoyancy(layout: DofLayout, gamma) -> sp.csr_matrix:
    """``G[v, T] = (gamma T, v)_fluid``: velocity rows, temperature columns."""
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (2,) or abs(np.linalg.norm(gamma) - 1.0) > 1e-12:
        raise ValueError(f"gravity direction must be a unit 2-vector, got {gamma}")
    m = layout.p2_pattern.assemble(_mass_local(layout) * layout.fluid_indicator[:, None, None])
    return sp.vstack([gamma[0] * m, gamma[1] * m], format="csr")


def assemble_u1_source(layout: DofLayout) -> sp.csr_matrix:
    """``(u_1, S)``: temperature rows, velocity columns (second component ignored)."""
    m = layout.mass_p2
    return sp.hstack([m, sp.csr_matrix(m.shape)], format="csr")


def load_vector(layout: DofLayout, values_at_quad: np.ndarray) -> np.ndarray:
    """``(f, phi_i)`` for f sampled at the degree-5 quadrature points ``(E,Q)`` or ``(E,Q,2)``."""
    q = layout.quad()
    flat = layout.cell_nodes.ravel()
    if values_at_quad.ndim == 2:
        local = np.einsum("eq,eq,qi->ei", q.wdet, values_at_quad, q.phi)
        return np.bincount(flat, weights=local.ravel(), minlength=layout.n_nodes)
    parts = []
    for c in range(values_at_quad.shape[-1]):
        local = np.einsum("eq,eq,qi->ei", q.wdet, values_at_quad[..., c], q.phi)
        parts.append(np.bincount(flat, weights=local.ravel(), minlength=layout.n_nodes))
    return np.concatenate(parts)


def interpolate(layout: DofLayout, fn, role: Role = Role.TEMPERATURE) -> np.ndarray:
    """Nodal interpolant of ``fn(x, y)``; velocity callables return shape ``(2, n)``."""
    if role is Role.PRESSURE:
        x, y = layout.mesh.vertices.T
        return np.asarray(fn(x, y), dtype=float) * np.ones(len(x))
    x, y = layout.nodes.T
    vals = np.asarray(fn(x, y), dtype=float)
    if role is Role.VELOCITY:
        return (vals * np.ones((2, len(x)))).ravel()
    return vals * np.ones(len(x))


def apply_dirichlet(matrix: sp.spmatrix, rhs: np.ndarray, fixed: np.ndarray, values):
    """Impose ``x[fixed] = values`` on ``matrix @ x = rhs``.

    Constrained rows and columns are replaced by identity and the column
    contribution is lifted to the right-hand side, so symmetric blocks stay
    symmetric. ``values`` may be full-length (entries at free dofs ignored) or
    hold one value per constrained dof; ``rhs`` may have several columns.
    """
    a = sp.csr_matrix(matrix, copy=True)
    n = a.shape[0]
    fixed = np.asarray(fixed, dtype=bool)
    rhs = np.asarray(rhs, dtype=float)
    idx = np.flatnonzero(fixed)
    values = np.asarray(values, dtype=float)
    multi = rhs.ndim == 2
    if values.shape[0] == n:
        vals = values[idx]
    elif values.shape[0] == len(idx):
        vals = values
    else:
        raise ValueError(f"expected {len(idx)} or {n} boundary values, got {values.shape[0]}")
    if np.any(~np.isfinite(vals)):
        raise ValueError("missing (non-finite) value for a constrained dof")

    g = np.zeros(rhs.shape)
    if multi and vals.ndim == 1:
        vals = np.repeat(vals[:, None], rhs.shape[1], axis=1)
    g[idx] = vals
    b = rhs - a @ g
    b[idx] = vals

    rows = np.repeat(np.arange(n), np.diff(a.indptr))
    a.data[fixed[rows] | fixed[a.indices]] = 0.0
    a = (a + sp.diags(fixed.astype(float))).tocsr()
    a.eliminate_zeros()
    return a, b
