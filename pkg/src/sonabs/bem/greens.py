"""Green-kernel integrals over mesh elements.

Entries of the surface system are integrals of e^{-j k r}/(4 pi r) over a
source element, evaluated at element centroids or at field points. Regular
entries use a tensor-product Gauss-Legendre rule; the singular self entry is
split into a closed-form static potential plus a quadrature of the bounded
remainder (e^{-j k r} - 1)/(4 pi r).

All elements of a mesh are congruent and grid-aligned, so an entry depends
only on the absolute centroid offset (|di|, |dj|). Assembly therefore fills
an (nx, ny) table and expands it by lookup, which also makes the matrix
symmetric under element exchange by construction.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial.legendre import leggauss

from sonabs.bem.mesh import BemMesh

FOUR_PI = 4.0 * np.pi


def gauss_legendre_2d(order: int):
    """Tensor-product rule on [-1, 1]^2: points (order^2, 2), weights (order^2,)."""
    x, w = leggauss(order)
    px, py = np.meshgrid(x, x, indexing="ij")
    wx, wy = np.meshgrid(w, w, indexing="ij")
    pts = np.column_stack([px.ravel(), py.ravel()])
    return pts, (wx * wy).ravel()


def rect_self_potential(dx: float, dy: float) -> float:
    """Closed-form static potential of a dx-by-dy rectangle at its center.

    Integral of 1/(4 pi r) dS = (a*asinh(b/a) + b*asinh(a/b)) / pi with
    half-edges a = dx/2, b = dy/2.
    """
    a = 0.5 * dx
    b = 0.5 * dy
    return (a * np.arcsinh(b / a) + b * np.arcsinh(a / b)) / np.pi


class GreenAssembler:
    """Per-frequency assembly of the element-to-element Green matrix.

    Geometry-dependent quantities (quadrature offsets, the displacement
    distance table, index maps) are computed once; each frequency then only
    evaluates the oscillatory kernel.
    """

    def __init__(self, mesh: BemMesh, quad_order: int = 6):
        if quad_order < 2:
            raise ValueError("quadrature order must be at least 2")
        self.mesh = mesh
        self.quad_order = quad_order

        pts, wts = gauss_legendre_2d(quad_order)
        # Quadrature offsets within one element and area-scaled weights.
        self._qx = pts[:, 0] * 0.5 * mesh.dx
        self._qy = pts[:, 1] * 0.5 * mesh.dy
        self._qw = wts * (mesh.element_area / 4.0)

        # Distances from a collocation centroid to the quadrature points of a
        # source element displaced by (di*dx, dj*dy), for all non-negative
        # displacements: shape (nx, ny, Q).
        di = np.arange(mesh.nx)[:, None, None]
        dj = np.arange(mesh.ny)[None, :, None]
        rx = di * mesh.dx - self._qx[None, None, :]
        ry = dj * mesh.dy - self._qy[None, None, :]
        self._r_table = np.sqrt(rx * rx + ry * ry)

        # Element-pair lookup |ix_i - ix_n|, |iy_i - iy_n| as flat indices
        # into the (nx, ny) table.
        ix = np.arange(mesh.n_elements) // mesh.ny
        iy = np.arange(mesh.n_elements) % mesh.ny
        dix = np.abs(ix[:, None] - ix[None, :])
        diy = np.abs(iy[:, None] - iy[None, :])
        self._pair_index = (dix * mesh.ny + diy).astype(np.int64)

        self._static_self = rect_self_potential(mesh.dx, mesh.dy)

    def displacement_table(self, k0: float) -> np.ndarray:
        """Entries for all non-negative centroid offsets, shape (nx, ny)."""
        r = self._r_table
        table = np.einsum(
            "q,ijq->ij", self._qw, np.exp(-1j * k0 * r) / (FOUR_PI * r)
        )
        # Self entry: closed-form 1/(4 pi r) part + bounded remainder.
        r0 = r[0, 0]
        remainder = np.dot(self._qw, (np.exp(-1j * k0 * r0) - 1.0) / (FOUR_PI * r0))
        table[0, 0] = self._static_self + remainder
        return table

    def matrix(self, k0: float) -> np.ndarray:
        """Full element-to-element matrix, shape (N, N)."""
        table = self.displacement_table(k0).ravel()
        return table[self._pair_index]

    def field_rows(self, k0: float, points: np.ndarray) -> np.ndarray:
        """Element integrals evaluated at off-surface field points, shape (n_pts, N).

        Points must not touch the z = 0 plane inside the patch (the kernel is
        evaluated by the regular rule only).
        """
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        r = self._field_distances(points)
        return np.einsum("q,pnq->pn", self._qw, np.exp(-1j * k0 * r) / (FOUR_PI * r))

    def field_rows_multi(self, k0s: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Field rows for several wavenumbers at once, shape (n_k, n_pts, N)."""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        r = self._field_distances(points)
        k = np.asarray(k0s, dtype=np.float64)[:, None, None, None]
        return np.einsum(
            "q,kpnq->kpn", self._qw, np.exp(-1j * k * r) / (FOUR_PI * r)
        )

    def _field_distances(self, points: np.ndarray) -> np.ndarray:
        offsets = np.column_stack([self._qx, self._qy, np.zeros_like(self._qx)])
        quad = self.mesh.centroids[:, None, :] + offsets[None, :, :]  # (N, Q, 3)
        diff = quad[None, :, :, :] - points[:, None, None, :]
        r = np.sqrt(np.sum(diff * diff, axis=-1))
        if np.any(r < 1e-12):
            raise ValueError("field point coincides with a quadrature point")
        return r
