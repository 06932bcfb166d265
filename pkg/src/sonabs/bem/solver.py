"""Surface solve and receiver evaluation for the baffled-sample BEM.

The surface system per frequency is (0.5*I + j*k0*beta*G) p = b with b the
two-term (direct + image) incident field at the collocation points and
beta = rho0*c0/Zs the normalized surface admittance; receiver pressures
follow from p(r) = b(r) - j*k0*beta * sum_n p_n * G_recv[n]. A rigid surface
has beta = 0, so receiver pressures reduce to the incident field exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from sonabs.bem.cache import GreenCache, geometry_key
from sonabs.bem.greens import GreenAssembler
from sonabs.bem.mesh import BemMesh, build_mesh
from sonabs.material import ImpedanceSpectrum, surface_impedance
from sonabs.types import (
    AirProperties,
    FrequencyGrid,
    MaterialParams,
    ScenarioGeometry,
    TransferSpectrum,
)

#: Surface pressures must satisfy ||M p - b|| / ||b|| below this bound.
RESIDUAL_TOL = 1e-10

#: |p2| below this fraction of its grid maximum flags the frequency.
P2_FLAG_FRACTION = 1e-12


class BemSolveError(RuntimeError):
    """Raised when a per-frequency surface system cannot be solved reliably."""

    def __init__(self, frequency: float, message: str, condition: float | None = None):
        self.frequency = frequency
        self.condition = condition
        detail = f" (condition estimate {condition:.3e})" if condition else ""
        super().__init__(f"BEM solve failed at {frequency:g} Hz: {message}{detail}")


def incident_field(points, source, k0s) -> np.ndarray:
    """Direct plus image-source field at each point, shape (n_points, n_freq).

    Terms are e^{-j k0 R}/R for R to the source at (xq, yq, zq) and to its
    mirror at (xq, yq, -zq); no 1/(4 pi) is applied, matching the surface
    system's right-hand side convention (the overall scale divides out of
    the transfer function).
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if np.any(points[:, 2] < 0):
        raise ValueError("incident field points must lie on or above the baffle")
    source = np.asarray(source, dtype=np.float64)
    image = source * np.array([1.0, 1.0, -1.0])
    r_dir = np.linalg.norm(points - source, axis=1)
    r_img = np.linalg.norm(points - image, axis=1)
    if np.any(r_dir < 1e-12) or np.any(r_img < 1e-12):
        raise ValueError("field point coincides with the source")
    k = np.asarray(k0s, dtype=np.float64)[None, :]
    return (
        np.exp(-1j * k * r_dir[:, None]) / r_dir[:, None]
        + np.exp(-1j * k * r_img[:, None]) / r_img[:, None]
    )


class GreenMatrixSet:
    """Per-frequency Green matrices and receiver rows for one mesh + grid.

    Matrices depend on geometry only; the set can be shared across any number
    of material/source combinations. With a cache attached, records are read
    through and assembled on miss.
    """

    def __init__(
        self,
        mesh: BemMesh,
        grid: FrequencyGrid,
        air: AirProperties,
        receiver_points,
        quad_order: int = 6,
        cache: GreenCache | None = None,
    ):
        self.mesh = mesh
        self.grid = grid
        self.air = air
        self.receiver_points = np.atleast_2d(np.asarray(receiver_points, dtype=np.float64))
        if np.any(self.receiver_points[:, 2] <= 0):
            raise ValueError("receivers must lie strictly above the surface")
        self.quad_order = quad_order
        self.assembler = GreenAssembler(mesh, quad_order)
        self.k0 = grid.wavenumbers(air)
        self.cache = cache
        self.key = geometry_key(mesh, quad_order, self.receiver_points, grid.f)
        if cache is not None:
            cache.ensure_meta(
                self.key,
                {
                    "lx": mesh.lx,
                    "ly": mesh.ly,
                    "nx": mesh.nx,
                    "ny": mesh.ny,
                    "quad_order": quad_order,
                    "receivers": self.receiver_points.tolist(),
                    "f_hz": grid.f.tolist(),
                },
            )

    @property
    def n_elements(self) -> int:
        return self.mesh.n_elements

    def assemble(self, index: int):
        """Assemble (matrix, receiver_rows) for one frequency, bypassing the cache."""
        k = self.k0[index]
        return (
            self.assembler.matrix(k),
            self.assembler.field_rows(k, self.receiver_points),
        )

    def get(self, index: int):
        """Cached read-through access to (matrix, receiver_rows)."""
        if self.cache is None:
            return self.assemble(index)
        if not self.cache.has(self.key, index):
            matrix, recv = self.assemble(index)
            self.cache.write(self.key, index, self.grid.f[index], matrix, recv)
            return matrix, recv
        _, matrix, recv = self.cache.read(self.key, index)
        return matrix, recv

    def assemble_all(self) -> int:
        """Populate the cache for every grid frequency; returns assembly count."""
        if self.cache is None:
            raise ValueError("assemble_all requires a cache")
        assembled = 0
        for fi in range(len(self.grid)):
            if not self.cache.has(self.key, fi):
                matrix, recv = self.assemble(fi)
                self.cache.write(self.key, fi, self.grid.f[fi], matrix, recv)
                assembled += 1
        return assembled


@dataclass
class SurfacePressureField:
    """Piecewise-constant surface pressures per frequency, with solve residuals."""

    values: np.ndarray  # (n_freq, n_elements) complex
    residuals: np.ndarray  # (n_freq,) relative residual of each solve


def _coupling(zs: ImpedanceSpectrum, air: AirProperties, k0: np.ndarray) -> np.ndarray:
    """j*k0*rho0*c0/Zs per frequency; exactly zero where rigid-flagged."""
    return 1j * k0 * zs.normalized_admittance(air)


def solve_surface_pressure(
    gset: GreenMatrixSet,
    zs: ImpedanceSpectrum,
    source_position,
    air: AirProperties,
) -> SurfacePressureField:
    """Solve (0.5*I + j*k0*beta*G) p = b per frequency with dense partial-pivot LU.

    A rigid flag makes the coupling vanish, giving p = 2 b without a solve.
    """
    n_freq = len(gset.grid)
    if zs.values.shape != (n_freq,):
        raise ValueError("impedance spectrum length must match the grid")
    b_all = incident_field(gset.mesh.centroids, source_position, gset.k0)  # (N, F)
    coupling = _coupling(zs, air, gset.k0)
    n = gset.n_elements
    pressures = np.empty((n_freq, n), dtype=np.complex128)
    residuals = np.zeros(n_freq)
    eye = np.eye(n)
    for fi in range(n_freq):
        b = b_all[:, fi]
        c = coupling[fi]
        if c == 0:
            pressures[fi] = 2.0 * b
            continue
        g, _ = gset.get(fi)
        m = 0.5 * eye + c * g
        try:
            lu, piv = lu_factor(m)
            p = lu_solve((lu, piv), b)
        except np.linalg.LinAlgError as exc:
            raise BemSolveError(gset.grid.f[fi], str(exc), float(np.linalg.cond(m)))
        res = np.linalg.norm(m @ p - b) / np.linalg.norm(b)
        if not np.isfinite(res) or res > 1e-6:
            raise BemSolveError(
                gset.grid.f[fi],
                f"relative residual {res:.3e}",
                float(np.linalg.cond(m)),
            )
        pressures[fi] = p
        residuals[fi] = res
    if not np.all(np.isfinite(pressures)):
        raise BemSolveError(float("nan"), "non-finite surface pressures")
    return SurfacePressureField(pressures, residuals)


def field_at_receivers(
    gset: GreenMatrixSet,
    surface: SurfacePressureField,
    zs: ImpedanceSpectrum,
    source_position,
    air: AirProperties,
) -> np.ndarray:
    """Receiver pressures p(r) = b(r) - j*k0*beta * (G_recv @ p), shape (n_recv, n_freq)."""
    b_recv = incident_field(gset.receiver_points, source_position, gset.k0)
    coupling = _coupling(zs, air, gset.k0)
    out = np.array(b_recv, dtype=np.complex128)
    for fi in range(len(gset.grid)):
        c = coupling[fi]
        if c == 0:
            continue
        _, recv = gset.get(fi)
        out[:, fi] -= c * (recv @ surface.values[fi])
    return out


def simulate_transfer_function(
    geom: ScenarioGeometry,
    mat: MaterialParams | None,
    air: AirProperties,
    grid: FrequencyGrid,
    resolution: float = 6.0,
    quad_order: int = 6,
    cache: GreenCache | None = None,
    rigid: bool = False,
) -> TransferSpectrum:
    """Full chain: mesh, impedance BC at the source elevation, solve, H12 = p1/p2."""
    if rigid:
        zs = ImpedanceSpectrum.all_rigid(len(grid))
    else:
        if mat is None:
            raise ValueError("material parameters required unless rigid=True")
        zs = surface_impedance(grid, mat, air, geom.elevation_deg)
    mesh = build_mesh(geom, air, grid.f_max, resolution)
    gset = GreenMatrixSet(mesh, grid, air, geom.mic_positions, quad_order, cache)
    surface = solve_surface_pressure(gset, zs, geom.source_position, air)
    p = field_at_receivers(gset, surface, zs, geom.source_position, air)
    p1, p2 = p[0], p[1]
    flagged = np.abs(p2) < P2_FLAG_FRACTION * np.max(np.abs(p2))
    h12 = np.empty_like(p1)
    ok = ~flagged
    h12[ok] = p1[ok] / p2[ok]
    h12[flagged] = np.nan
    return TransferSpectrum(h12, grid, geometry=geom, flagged=flagged)
