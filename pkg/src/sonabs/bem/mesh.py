"""Rectangular surface mesh for the sample patch."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from sonabs.types import AirProperties, ScenarioGeometry


@dataclass(frozen=True)
class BemMesh:
    """Uniform grid of congruent rectangular elements tiling the sample.

    Elements are indexed row-major: element e = ix * ny + iy covers the cell
    (ix, iy), with centroids on the z = 0 plane.
    """

    lx: float
    ly: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.lx <= 0 or self.ly <= 0:
            raise ValueError("sample dimensions must be positive")
        if self.nx < 1 or self.ny < 1:
            raise ValueError("element counts must be at least 1")

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @property
    def dy(self) -> float:
        return self.ly / self.ny

    @property
    def n_elements(self) -> int:
        return self.nx * self.ny

    @property
    def element_area(self) -> float:
        return self.dx * self.dy

    @cached_property
    def centroids(self) -> np.ndarray:
        """Element centroids, shape (n_elements, 3), z = 0."""
        ix = np.arange(self.nx)
        iy = np.arange(self.ny)
        cx = -0.5 * self.lx + (ix + 0.5) * self.dx
        cy = -0.5 * self.ly + (iy + 0.5) * self.dy
        gx, gy = np.meshgrid(cx, cy, indexing="ij")
        out = np.column_stack(
            [gx.ravel(), gy.ravel(), np.zeros(self.n_elements)]
        )
        out.setflags(write=False)
        return out

    def refine(self, factor: int = 2) -> "BemMesh":
        """Same patch with `factor`-times smaller elements per axis."""
        return BemMesh(self.lx, self.ly, self.nx * factor, self.ny * factor)


def build_mesh(
    geom: ScenarioGeometry,
    air: AirProperties,
    f_max: float,
    resolution: float = 6.0,
) -> BemMesh:
    """Mesh the sample with at least `resolution` elements per wavelength at f_max.

    Element edges never exceed c0 / (f_max * resolution); per-axis counts are
    rounded up so the elements tile the patch exactly.
    """
    if resolution < 4:
        raise ValueError("resolution must be at least 4 elements per wavelength")
    if f_max <= 0:
        raise ValueError("f_max must be positive")
    h_max = air.c0 / (f_max * resolution)
    nx = math.ceil(geom.lx / h_max)
    ny = math.ceil(geom.ly / h_max)
    return BemMesh(geom.lx, geom.ly, nx, ny)
