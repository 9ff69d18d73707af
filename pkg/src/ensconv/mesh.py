"""Structured triangulations of the unit square, with optional solid sub-regions.

Vertices of an ``m x m`` grid are numbered row by row, ``k = j*(m+1) + i`` for
the vertex at ``(i/m, j/m)``. Every grid square is split along its
bottom-left to top-right diagonal.
"""

from __future__ import annotations

import dataclasses
import enum
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


class MeshError(ValueError):
    """Invalid mesh configuration."""


class Tag(enum.IntEnum):
    UNCLASSIFIED = 0
    GAMMA1_DIRICHLET_T = 1
    GAMMA2_NEUMANN_T = 2


class Region(enum.IntEnum):
    FLUID = 0
    SOLID = 1


class Side(enum.Enum):
    LEFT = "left"
    RIGHT = "right"
    BOTTOM = "bottom"
    TOP = "top"


@dataclasses.dataclass(frozen=True, eq=False)
class TriMesh:
    """Immutable triangle mesh.

    ``boundary_edges`` is a ``(nb, 2)`` array of vertex pairs and ``tags`` holds
    one :class:`Tag` value per boundary edge. ``region`` holds one
    :class:`Region` value per triangle.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    tags: np.ndarray
    region: np.ndarray
    h: float
    m: int | None = None

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edge_side(self) -> np.ndarray:
        """Side of the unit square on which each boundary edge lies (as strings, '' if none)."""
        mid = self.vertices[self.boundary_edges].mean(axis=1)
        out = np.full(len(mid), "", dtype=object)
        tol = 1e-12
        out[np.abs(mid[:, 0]) < tol] = Side.LEFT.value
        out[np.abs(mid[:, 0] - 1.0) < tol] = Side.RIGHT.value
        out[np.abs(mid[:, 1]) < tol] = Side.BOTTOM.value
        out[np.abs(mid[:, 1] - 1.0) < tol] = Side.TOP.value
        return out

    def edges_with_tag(self, tag: Tag) -> np.ndarray:
        return self.boundary_edges[self.tags == tag]


def _longest_edge(vertices: np.ndarray, triangles: np.ndarray) -> float:
    p = vertices[triangles]
    lengths = [np.linalg.norm(p[:, (k + 1) % 3] - p[:, k], axis=1) for k in range(3)]
    return float(np.max(lengths))


def find_boundary_edges(triangles: np.ndarray) -> np.ndarray:
    """Edges that belong to exactly one triangle, oriented as in that triangle."""
    edges = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    key = np.sort(edges, axis=1)
    _, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    return edges[counts[inverse] == 1]


def build_structured_unit_square(m: int) -> TriMesh:
    """Split ``[0,1]^2`` into ``m*m`` squares, two triangles each."""
    if int(m) != m or m < 1:
        raise MeshError(f"grid size must be a positive integer, got {m!r}")
    m = int(m)
    x = np.linspace(0.0, 1.0, m + 1)
    X, Y = np.meshgrid(x, x)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(m), np.arange(m))
    a = (j * (m + 1) + i).ravel()
    b = a + 1
    c = a + m + 2
    d = a + m + 1
    triangles = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    # keep the two triangles of one square adjacent in memory
    triangles = triangles.reshape(2, m * m, 3).transpose(1, 0, 2).reshape(-1, 3)

    boundary = find_boundary_edges(triangles)
    return TriMesh(
        vertices=vertices,
        triangles=triangles,
        boundary_edges=boundary,
        tags=np.full(len(boundary), Tag.UNCLASSIFIED, dtype=np.int8),
        region=np.full(len(triangles), Region.FLUID, dtype=np.int8),
        h=_longest_edge(vertices, triangles),
        m=m,
    )


def _on_grid(v: float, m: int) -> bool:
    return abs(v * m - round(v * m)) < 1e-9


def build_embedded_solid(m: int, solid_strips) -> TriMesh:
    """Structured mesh whose triangles inside the given rectangles are SOLID.

    Each strip is ``(x0, x1, y0, y1)``. Corners must lie on gridlines and each
    strip must touch the outer boundary, so the fluid region has no holes.
    """
    mesh = build_structured_unit_square(m)
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    region = np.full(mesh.n_triangles, Region.FLUID, dtype=np.int8)
    for strip in solid_strips:
        x0, x1, y0, y1 = map(float, strip)
        if not all(_on_grid(v, m) for v in (x0, x1, y0, y1)):
            raise MeshError(f"strip {strip} has a corner off the {m}x{m} gridlines")
        if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
            raise MeshError(f"strip {strip} is empty or outside the unit square")
        if not (x0 == 0.0 or x1 == 1.0 or y0 == 0.0 or y1 == 1.0):
            raise MeshError(f"strip {strip} does not touch the outer boundary")
        inside = (
            (centroids[:, 0] > x0) & (centroids[:, 0] < x1)
            & (centroids[:, 1] > y0) & (centroids[:, 1] < y1)
        )
        region[inside] = Region.SOLID

    fluid = np.flatnonzero(region == Region.FLUID)
    if len(fluid) == 0:
        raise MeshError("solid strips cover the whole domain")
    if _n_components(mesh.triangles[fluid]) != 1:
        raise MeshError("fluid region is not connected")
    return dataclasses.replace(mesh, region=region)


def frame_strips(k: int, m: int) -> list[tuple[float, float, float, float]]:
    """Solid walls ``k`` cells thick along all four sides of an ``m x m`` grid."""
    w = k / m
    return [(0.0, w, 0.0, 1.0), (1.0 - w, 1.0, 0.0, 1.0), (w, 1.0 - w, 0.0, w), (w, 1.0 - w, 1.0 - w, 1.0)]


def _n_components(triangles: np.ndarray) -> int:
    # triangles sharing an edge are adjacent
    nt = len(triangles)
    edges = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    owner = np.tile(np.arange(nt), 3)
    key = np.sort(edges, axis=1)
    _, inverse = np.unique(key, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    order = np.argsort(inverse, kind="stable")
    inv_sorted = inverse[order]
    same = np.flatnonzero(inv_sorted[1:] == inv_sorted[:-1])
    rows, cols = owner[order][same], owner[order][same + 1]
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(nt, nt))
    return connected_components(graph, directed=False)[0]


def classify_boundary(mesh: TriMesh, dirichlet_sides) -> TriMesh:
    """Tag edges on ``dirichlet_sides`` as GAMMA1 (temperature Dirichlet), the rest GAMMA2."""
    sides = {Side(s) if not isinstance(s, Side) else s for s in dirichlet_sides}
    if not sides:
        raise MeshError("at least one Dirichlet side is required (|Gamma1| > 0)")
    edge_side = mesh.edge_side()
    wanted = np.isin(edge_side, [s.value for s in sides])
    tags = np.where(wanted, Tag.GAMMA1_DIRICHLET_T, Tag.GAMMA2_NEUMANN_T).astype(np.int8)
    if not np.any(tags == Tag.GAMMA1_DIRICHLET_T):
        raise MeshError("no boundary edge lies on the requested Dirichlet sides")
    return dataclasses.replace(mesh, tags=tags)


def dump_mesh(mesh: TriMesh, path) -> None:
    """Plain-text dump: vertices, then triangles (with region), then tagged edges."""
    lines = [f"vertices {mesh.n_vertices}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines.append(f"triangles {mesh.n_triangles}")
    lines += [f"{a} {b} {c} {r}" for (a, b, c), r in zip(mesh.triangles, mesh.region)]
    lines.append(f"edges {len(mesh.boundary_edges)}")
    lines += [f"{a} {b} {Tag(t).name}" for (a, b), t in zip(mesh.boundary_edges, mesh.tags)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path) -> TriMesh:
    rows = Path(path).read_text().splitlines()
    pos = 0

    def block(name):
        nonlocal pos
        head, count = rows[pos].split()
        if head != name:
            raise MeshError(f"expected '{name}' section, found '{head}'")
        out = [r.split() for r in rows[pos + 1: pos + 1 + int(count)]]
        pos += 1 + int(count)
        return out

    verts = np.array(block("vertices"), dtype=float).reshape(-1, 2)
    tri = block("triangles")
    triangles = np.array([t[:3] for t in tri], dtype=np.int64).reshape(-1, 3)
    region = np.array([t[3] for t in tri], dtype=np.int8)
    edg = block("edges")
    edges = np.array([e[:2] for e in edg], dtype=np.int64).reshape(-1, 2)
    tags = np.array([Tag[e[2]] for e in edg], dtype=np.int8)
    return TriMesh(verts, triangles, edges, tags, region, _longest_edge(verts, triangles))
