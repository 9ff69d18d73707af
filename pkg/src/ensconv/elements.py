"""Reference-triangle machinery: P1/P2 Lagrange bases, quadrature, affine maps.

The reference triangle has vertices (0,0), (1,0), (0,1). P2 local nodes are the
three vertices followed by the three edge midpoints, midpoint ``3+k`` lying on
the edge opposite vertex ``k``.
"""

from __future__ import annotations

import dataclasses
import functools

import numpy as np

P2_NODES = np.array(
    [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.5], [0.0, 0.5], [0.5, 0.0]]
)
P1_NODES = P2_NODES[:3]

# gradients of the barycentric coordinates on the reference triangle
_DLAMBDA = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
# vertex pair spanned by the edge opposite vertex k
OPPOSITE = ((1, 2), (2, 0), (0, 1))


def _barycentric(points: np.ndarray) -> np.ndarray:
    x, y = points[..., 0], points[..., 1]
    return np.stack([1.0 - x - y, x, y], axis=-1)


def basis(degree: int, points) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised basis evaluation at reference points ``(..., 2)``.

    Returns values ``(..., n)`` and gradients ``(..., n, 2)`` where ``n`` is 3
    or 6. No domain check; see :func:`eval_basis` for the checked version.
    """
    points = np.asarray(points, dtype=float)
    lam = _barycentric(points)
    if degree == 1:
        grads = np.broadcast_to(_DLAMBDA, lam.shape + (2,)).copy()
        return lam, grads
    if degree != 2:
        raise ValueError(f"unsupported degree {degree}")
    vals = np.empty(lam.shape[:-1] + (6,))
    grads = np.empty(lam.shape[:-1] + (6, 2))
    for k in range(3):
        vals[..., k] = lam[..., k] * (2.0 * lam[..., k] - 1.0)
        grads[..., k, :] = (4.0 * lam[..., k] - 1.0)[..., None] * _DLAMBDA[k]
    for k, (i, j) in enumerate(OPPOSITE):
        vals[..., 3 + k] = 4.0 * lam[..., i] * lam[..., j]
        grads[..., 3 + k, :] = 4.0 * (
            lam[..., j, None] * _DLAMBDA[i] + lam[..., i, None] * _DLAMBDA[j]
        )
    return vals, grads


def eval_basis(degree: int, point) -> tuple[np.ndarray, np.ndarray]:
    point = np.asarray(point, dtype=float)
    if point.shape != (2,):
        raise ValueError("expected a single 2D reference point")
    if degree not in (1, 2):
        raise ValueError(f"unsupported degree {degree}")
    if np.min(_barycentric(point)) < -1e-12:
        raise ValueError(f"point {tuple(point)} lies outside the reference triangle")
    return basis(degree, point)


@dataclasses.dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (nq, 2) reference coordinates
    weights: np.ndarray  # (nq,), summing to 1/2
    degree: int


def _radon7() -> QuadratureRule:
    s = np.sqrt(15.0)
    a, b = (6.0 - s) / 21.0, (6.0 + s) / 21.0
    wa, wb = (155.0 - s) / 1200.0, (155.0 + s) / 1200.0
    pts = [[1 / 3, 1 / 3], [a, a], [1 - 2 * a, a], [a, 1 - 2 * a], [b, b], [1 - 2 * b, b], [b, 1 - 2 * b]]
    w = [9 / 40, wa, wa, wa, wb, wb, wb]
    return QuadratureRule(np.array(pts), 0.5 * np.array(w), 5)


def _collapsed_gauss(degree: int) -> QuadratureRule:
    # Duffy map (s, t) -> (s, t(1-s)); the Jacobian (1-s) adds one degree in s
    n = (degree + 3) // 2
    g, w = np.polynomial.legendre.leggauss(n)
    g, w = 0.5 * (g + 1.0), 0.5 * w
    S, T = np.meshgrid(g, g, indexing="ij")
    WS, WT = np.meshgrid(w, w, indexing="ij")
    pts = np.column_stack([S.ravel(), (T * (1.0 - S)).ravel()])
    wts = (WS * WT * (1.0 - S)).ravel()
    return QuadratureRule(pts, wts, degree)


MAX_ORDER = 20


@functools.lru_cache(maxsize=None)
def quadrature(order: int) -> QuadratureRule:
    """Triangle rule exact for polynomials of total degree ``order``.

    Order 5 is the 7-point Radon rule; orders 6..20 use collapsed Gauss-Legendre
    products.
    """
    if int(order) != order or order < 5 or order > MAX_ORDER:
        raise ValueError(f"quadrature order must be an integer in [5, {MAX_ORDER}], got {order!r}")
    if order == 5:
        return _radon7()
    return _collapsed_gauss(int(order))


def affine_map(mesh, tri: int, ref_point) -> tuple[np.ndarray, np.ndarray, float]:
    """Physical point, Jacobian and its determinant for one triangle.

    Gradients transform as ``grad_x = inv(J).T @ grad_ref``.
    """
    if not 0 <= tri < mesh.n_triangles:
        raise IndexError(f"triangle index {tri} out of range")
    p = mesh.vertices[mesh.triangles[tri]]
    jac = np.column_stack([p[1] - p[0], p[2] - p[0]])
    det = float(np.linalg.det(jac))
    if det <= 0.0:
        raise ValueError(f"triangle {tri} is degenerate or clockwise (detJ={det})")
    return p[0] + jac @ np.asarray(ref_point, dtype=float), jac, det


def jacobians(vertices: np.ndarray, triangles: np.ndarray):
    """Batched affine data: origins (E,2), Jacobians (E,2,2), detJ (E,), inverse-transposes (E,2,2)."""
    p = vertices[triangles]
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    if np.any(det <= 0.0):
        bad = int(np.flatnonzero(det <= 0.0)[0])
        raise ValueError(f"triangle {bad} is degenerate or clockwise")
    inv_t = np.empty_like(jac)
    inv_t[:, 0, 0] = jac[:, 1, 1] / det
    inv_t[:, 0, 1] = -jac[:, 1, 0] / det
    inv_t[:, 1, 0] = -jac[:, 0, 1] / det
    inv_t[:, 1, 1] = jac[:, 0, 0] / det
    return p[:, 0], jac, det, inv_t
