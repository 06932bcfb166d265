"""Shared domain types: air, material, frequency grid, scenario geometry."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: Default microphone heights above the sample center [m].
DEFAULT_MIC_HEIGHTS = (0.01, 0.03)

#: Default frequency grid: 10 Hz steps starting at 100 Hz, 190 points.
DEFAULT_F_START = 100.0
DEFAULT_F_STEP = 10.0
DEFAULT_N_FREQ = 190


@dataclass(frozen=True)
class AirProperties:
    """Ambient air: speed of sound c0 [m/s] and density rho0 [kg/m^3]."""

    c0: float = 343.0
    rho0: float = 1.21

    def __post_init__(self):
        if self.c0 <= 0 or self.rho0 <= 0:
            raise ValueError("air properties must be positive")

    @property
    def z0(self) -> float:
        """Characteristic impedance of air rho0*c0 [Pa s/m]."""
        return self.rho0 * self.c0


@dataclass(frozen=True)
class MaterialParams:
    """Porous slab over a rigid backing.

    sigma: flow resistivity [kN s/m^4] (Table-I unit convention).
    d: layer thickness [m].
    """

    sigma: float
    d: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"flow resistivity must be positive, got {self.sigma}")
        if self.d <= 0:
            raise ValueError(f"thickness must be positive, got {self.d}")


class FrequencyGrid:
    """Strictly increasing frequency axis with derived wavenumbers."""

    def __init__(self, f):
        f = np.asarray(f, dtype=np.float64)
        if f.ndim != 1 or f.size == 0:
            raise ValueError("frequency grid must be a non-empty 1D array")
        if np.any(f <= 0) or np.any(np.diff(f) <= 0):
            raise ValueError("frequencies must be positive and strictly increasing")
        self.f = f
        self.f.setflags(write=False)

    @classmethod
    def default(cls) -> "FrequencyGrid":
        # 100, 110, ..., 1990 Hz: 190 points at 10 Hz spacing.
        f = DEFAULT_F_START + DEFAULT_F_STEP * np.arange(DEFAULT_N_FREQ)
        return cls(f)

    def __len__(self) -> int:
        return self.f.size

    def __eq__(self, other) -> bool:
        return isinstance(other, FrequencyGrid) and np.array_equal(self.f, other.f)

    def __repr__(self) -> str:
        return f"FrequencyGrid({self.f[0]:g}..{self.f[-1]:g} Hz, n={self.f.size})"

    @property
    def f_max(self) -> float:
        return float(self.f[-1])

    def wavenumbers(self, air: AirProperties) -> np.ndarray:
        """k0 = 2*pi*f/c0 [rad/m]."""
        return 2.0 * np.pi * self.f / air.c0


@dataclass(frozen=True)
class ScenarioGeometry:
    """Sample extent, source pose, and the fixed microphone pair.

    The sample occupies [-lx/2, lx/2] x [-ly/2, ly/2] at z = 0, flush in a
    rigid baffle. The source sits at distance `source_distance` from the
    sample center, elevation measured from the surface normal.
    """

    lx: float
    ly: float
    source_distance: float
    elevation_deg: float = 0.0
    azimuth_deg: float = 0.0
    mic_heights: tuple = DEFAULT_MIC_HEIGHTS

    def __post_init__(self):
        if self.lx <= 0 or self.ly <= 0:
            raise ValueError("sample side lengths must be positive")
        if not (0.0 <= self.elevation_deg < 90.0):
            raise ValueError("elevation must lie in [0, 90) degrees")
        if self.source_distance <= 0:
            raise ValueError("source distance must be positive")
        z1, z2 = self.mic_heights
        if z1 <= 0 or z2 <= 0 or z1 == z2:
            raise ValueError("mic heights must be positive and distinct")

    @property
    def source_position(self) -> np.ndarray:
        """Source location [x, y, z] in meters; z > 0 above the baffle."""
        th = np.radians(self.elevation_deg)
        ph = np.radians(self.azimuth_deg)
        r = self.source_distance
        return np.array(
            [r * np.sin(th) * np.cos(ph), r * np.sin(th) * np.sin(ph), r * np.cos(th)]
        )

    @property
    def image_source_position(self) -> np.ndarray:
        """Mirror source below the baffle plane."""
        p = self.source_position
        return np.array([p[0], p[1], -p[2]])

    @property
    def mic_positions(self) -> np.ndarray:
        """Microphones on the surface normal above the sample center, shape (2, 3)."""
        z1, z2 = self.mic_heights
        return np.array([[0.0, 0.0, z1], [0.0, 0.0, z2]])


@dataclass
class TransferSpectrum:
    """Complex inter-microphone transfer function H12 on a frequency grid."""

    h12: np.ndarray
    grid: FrequencyGrid
    hc: np.ndarray | None = None
    geometry: ScenarioGeometry | None = None
    flagged: np.ndarray = field(default=None)  # per-frequency reliability flags

    def __post_init__(self):
        self.h12 = np.asarray(self.h12, dtype=np.complex128)
        if self.h12.shape != (len(self.grid),):
            raise ValueError(
                f"H12 length {self.h12.shape} does not match grid length {len(self.grid)}"
            )
        if self.hc is not None:
            self.hc = np.asarray(self.hc, dtype=np.complex128)
            if self.hc.shape != self.h12.shape:
                raise ValueError("calibration spectrum length must match H12")
        if self.flagged is None:
            self.flagged = np.zeros(len(self.grid), dtype=bool)


@dataclass
class AbsorptionSpectrum:
    """Real absorption coefficient per grid frequency with a method tag."""

    alpha: np.ndarray
    grid: FrequencyGrid
    method: str  # "traditional" | "network" | "reference"

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        if self.alpha.shape != (len(self.grid),):
            raise ValueError("alpha length must match grid length")
        if self.method not in ("traditional", "network", "reference"):
            raise ValueError(f"unknown method tag {self.method!r}")
        if not np.all(np.isfinite(self.alpha)):
            raise ValueError("absorption spectrum contains non-finite values")
        if self.method == "reference" and (
            np.any(self.alpha < -1e-12) or np.any(self.alpha > 1.0 + 1e-12)
        ):
            raise ValueError("reference absorption must lie in [0, 1]")
