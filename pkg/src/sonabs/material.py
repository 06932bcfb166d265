"""Empirical porous-material model and infinite-sample reference absorption.

Characteristic impedance and propagation constant follow Miki's power-law
fit, a rigid-backed layer gives the angle-dependent surface impedance, and
the plane-interface relation yields the reference (edge-free) reflection
and absorption used as training labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sonabs.types import AirProperties, FrequencyGrid, MaterialParams

# Miki power-law coefficients paired with the dimensionless ratio
# zeta = f / sigma, sigma in kN s/m^4 (equivalently 1e3*f/sigma in MKS).
_ZC_COEFF = 5.50
_ZC_COEFF_IM = 8.43
_ZC_EXP = -0.632
_KP_COEFF = 7.81
_KP_COEFF_IM = 11.41
_KP_EXP = -0.618

#: |sin(kp*d*cos(theta_t))| below this is treated as a cotangent pole.
_POLE_TOL = 1e-12


def miki_frequency_ratio(f, sigma):
    """Dimensionless frequency/flow-resistivity ratio zeta = f / sigma.

    f in Hz, sigma in kN s/m^4. This equals 1e3*f/sigma with sigma in
    N s/m^4, the normalization under which the coefficient set
    (5.50, 8.43, 7.81, 11.41) reproduces the published Miki curves.
    """
    f = np.asarray(f, dtype=np.float64)
    if np.any(f <= 0):
        raise ValueError("frequency must be positive")
    if sigma <= 0:
        raise ValueError("flow resistivity must be positive")
    return f / sigma


def miki_characteristics(grid: FrequencyGrid, mat: MaterialParams, air: AirProperties):
    """Characteristic impedance Zc [Pa s/m] and propagation constant kp [rad/m].

    Returns (zc, kp) as complex arrays on the grid. Im(kp) < 0 so the
    e^{-j kp r} phasor decays into the layer.
    """
    zeta = miki_frequency_ratio(grid.f, mat.sigma)
    za = zeta**_ZC_EXP
    zb = zeta**_KP_EXP
    zc = air.z0 * (1.0 + _ZC_COEFF * za - 1j * _ZC_COEFF_IM * za)
    kp = grid.wavenumbers(air) * (1.0 + _KP_COEFF * zb - 1j * _KP_COEFF_IM * zb)
    return zc, kp


@dataclass
class ImpedanceSpectrum:
    """Surface impedance per grid frequency with a finite rigid sentinel.

    `rigid` marks frequencies where the impedance is a pole (hard surface);
    downstream consumers map those to zero admittance / unit reflection
    instead of doing infinity arithmetic.
    """

    values: np.ndarray
    rigid: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        self.rigid = np.asarray(self.rigid, dtype=bool)
        if self.values.shape != self.rigid.shape:
            raise ValueError("values and rigid mask must have equal shapes")

    @classmethod
    def all_rigid(cls, n: int) -> "ImpedanceSpectrum":
        return cls(np.zeros(n, dtype=np.complex128), np.ones(n, dtype=bool))

    def normalized_admittance(self, air: AirProperties) -> np.ndarray:
        """rho0*c0/Zs per frequency; exactly zero at rigid entries."""
        beta = np.zeros_like(self.values)
        ok = ~self.rigid
        beta[ok] = air.z0 / self.values[ok]
        return beta


def surface_impedance(
    grid: FrequencyGrid,
    mat: MaterialParams,
    air: AirProperties,
    theta_deg: float,
) -> ImpedanceSpectrum:
    """Surface impedance of the rigid-backed layer at incidence theta.

    Zs = -j (Zc/cos(theta_t)) cot(kp d cos(theta_t)), with the refracted
    angle taken through the principal branch: cos(theta_t) =
    sqrt(1 - ((k0/kp) sin(theta))^2). At theta = 0 this reduces to
    -j Zc cot(kp d).
    """
    if not (0.0 <= theta_deg < 90.0):
        raise ValueError("incidence angle must lie in [0, 90) degrees")
    zc, kp = miki_characteristics(grid, mat, air)
    k0 = grid.wavenumbers(air)
    st = np.sin(np.radians(theta_deg))
    cos_t = np.sqrt(1.0 - (k0 / kp * st) ** 2 + 0j)
    arg = kp * mat.d * cos_t
    sin_arg = np.sin(arg)
    rigid = np.abs(sin_arg) < _POLE_TOL
    values = np.zeros_like(arg)
    ok = ~rigid
    values[ok] = -1j * (zc[ok] / cos_t[ok]) * np.cos(arg[ok]) / sin_arg[ok]
    return ImpedanceSpectrum(values, rigid)


def reference_reflection(
    zs: ImpedanceSpectrum, theta_deg: float, air: AirProperties
) -> np.ndarray:
    """Plane-interface reflection coefficient (Zs cos(theta) - z0)/(Zs cos(theta) + z0).

    Rigid-flagged frequencies map to R = 1.
    """
    ct = np.cos(np.radians(theta_deg))
    r = np.ones_like(zs.values)
    ok = ~zs.rigid
    zct = zs.values[ok] * ct
    r[ok] = (zct - air.z0) / (zct + air.z0)
    return r


def absorption_from_reflection(r: np.ndarray) -> np.ndarray:
    """alpha = 1 - |R|^2 per frequency; deliberately not clamped to [0, 1]."""
    return 1.0 - np.abs(np.asarray(r, dtype=np.complex128)) ** 2


def reference_absorption(
    grid: FrequencyGrid,
    mat: MaterialParams,
    air: AirProperties,
    theta_deg: float,
) -> np.ndarray:
    """Infinite-sample absorption label: Miki layer + plane-interface relation."""
    zs = surface_impedance(grid, mat, air, theta_deg)
    return absorption_from_reflection(reference_reflection(zs, theta_deg, air))
