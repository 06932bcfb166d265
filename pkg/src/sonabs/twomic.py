"""Classical two-microphone estimation and measured-data conditioning.

The spherical-wave inversion assumes specular reflection from the image
source, which only holds for an infinite sample; applied to finite-sample
transfer functions it produces the characteristic edge-diffraction
oscillations (including negative absorption at low frequency) that the
network is trained to remove.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

import numpy as np

from sonabs.types import (
    AbsorptionSpectrum,
    AirProperties,
    FrequencyGrid,
    ScenarioGeometry,
    TransferSpectrum,
)

log = logging.getLogger(__name__)

#: Relative magnitude below which a calibration spectrum is unusable.
CALIBRATION_TOL = 1e-12


def calibrate(h12_raw: np.ndarray, hc: np.ndarray) -> np.ndarray:
    """Divide out the inter-microphone calibration spectrum element-wise."""
    h12_raw = np.asarray(h12_raw, dtype=np.complex128)
    hc = np.asarray(hc, dtype=np.complex128)
    if h12_raw.shape != hc.shape:
        raise ValueError("calibration spectrum length must match H12")
    bad = np.abs(hc) < CALIBRATION_TOL
    if bad.any():
        raise ValueError(
            f"calibration spectrum vanishes at indices {np.flatnonzero(bad).tolist()}"
        )
    return h12_raw / hc


def regrid(
    f_measured: np.ndarray, values: np.ndarray, target: FrequencyGrid
) -> np.ndarray:
    """Linearly interpolate a measured spectrum onto the target grid.

    Real and imaginary parts interpolate independently; the measured axis
    must span the full target grid (no extrapolation).
    """
    f_measured = np.asarray(f_measured, dtype=np.float64)
    values = np.asarray(values, dtype=np.complex128)
    if f_measured.ndim != 1 or f_measured.shape != values.shape:
        raise ValueError("measured frequencies and values must be matching 1D arrays")
    if np.any(np.diff(f_measured) <= 0):
        raise ValueError("measured frequencies must be strictly increasing")
    if target.f[0] < f_measured[0] or target.f[-1] > f_measured[-1]:
        raise ValueError(
            f"target grid [{target.f[0]:g}, {target.f[-1]:g}] Hz exceeds the "
            f"measured span [{f_measured[0]:g}, {f_measured[-1]:g}] Hz"
        )
    re = np.interp(target.f, f_measured, values.real)
    im = np.interp(target.f, f_measured, values.imag)
    return re + 1j * im


def smooth(values: np.ndarray, window: int = 20, passes: int = 2) -> np.ndarray:
    """Centered moving average with shrinking windows at the edges.

    For window w, index i averages indices [i - w//2, i + (w-1-w//2)]
    clipped to the valid range (so edge values average over fewer points
    instead of being biased toward zero). Applied to real and imaginary
    parts independently, `passes` times.
    """
    values = np.asarray(values, dtype=np.complex128)
    n = values.size
    if not 1 <= window <= n:
        raise ValueError(f"window must lie in [1, {n}], got {window}")
    if passes < 0:
        raise ValueError("passes must be non-negative")
    left = window // 2
    right = window - 1 - left
    idx = np.arange(n)
    lo = np.maximum(idx - left, 0)
    hi = np.minimum(idx + right, n - 1)
    counts = (hi - lo + 1).astype(np.float64)
    out = values
    for _ in range(passes):
        csum = np.concatenate([[0.0 + 0.0j], np.cumsum(out)])
        out = (csum[hi + 1] - csum[lo]) / counts
    return out


def condition_measured(
    f_measured: np.ndarray,
    h12_raw: np.ndarray,
    target: FrequencyGrid,
    hc: np.ndarray | None = None,
    window: int = 20,
    passes: int = 2,
) -> np.ndarray:
    """Full measured-data chain: calibration, regridding, double smoothing."""
    h12 = calibrate(h12_raw, hc) if hc is not None else np.asarray(h12_raw)
    h12 = regrid(f_measured, h12, target)
    if passes > 0:
        h12 = smooth(h12, window=window, passes=passes)
    return h12


def reflection_two_mic(
    h: TransferSpectrum, geom: ScenarioGeometry, air: AirProperties
) -> np.ndarray:
    """Spherical-wave reflection coefficient from H12 and the scenario geometry.

    R = (A1 - H12*A2) / (H12*B2 - B1) with A_i, B_i the direct- and
    image-path spherical terms e^{-j k0 D}/D at microphone i. Isolated
    near-zero denominators are flagged and filled by linear interpolation
    from neighboring frequencies.
    """
    k0 = h.grid.wavenumbers(air)
    mics = geom.mic_positions
    src = geom.source_position
    img = geom.image_source_position
    d1 = np.linalg.norm(mics[0] - src)
    d2 = np.linalg.norm(mics[1] - src)
    d1i = np.linalg.norm(mics[0] - img)
    d2i = np.linalg.norm(mics[1] - img)
    a1 = np.exp(-1j * k0 * d1) / d1
    a2 = np.exp(-1j * k0 * d2) / d2
    b1 = np.exp(-1j * k0 * d1i) / d1i
    b2 = np.exp(-1j * k0 * d2i) / d2i
    num = a1 - h.h12 * a2
    den = h.h12 * b2 - b1
    bad = np.abs(den) < 1e-12 * np.max(np.abs(den))
    r = np.empty_like(num)
    ok = ~bad
    r[ok] = num[ok] / den[ok]
    if bad.any():
        idx = np.flatnonzero(bad)
        log.warning(
            "two-mic inversion denominator vanished at %s Hz; interpolating",
            h.grid.f[idx].tolist(),
        )
        good = np.flatnonzero(ok)
        if good.size == 0:
            raise ValueError("two-mic denominator vanishes on the whole grid")
        r[bad] = np.interp(h.grid.f[bad], h.grid.f[good], r[good].real) + 1j * np.interp(
            h.grid.f[bad], h.grid.f[good], r[good].imag
        )
    return r


def absorption_two_mic(
    h: TransferSpectrum, geom: ScenarioGeometry, air: AirProperties
) -> AbsorptionSpectrum:
    """alpha = 1 - |R|^2 from the spherical-wave inversion; not clamped."""
    r = reflection_two_mic(h, geom, air)
    return AbsorptionSpectrum(1.0 - np.abs(r) ** 2, h.grid, method="traditional")


def synthesize_transfer_function(
    r0: np.ndarray, geom: ScenarioGeometry, grid: FrequencyGrid, air: AirProperties
) -> TransferSpectrum:
    """Forward spherical-wave model: H12 for a prescribed reflection R0(f).

    p_i = e^{-j k0 D_i}/D_i + R0 e^{-j k0 D'_i}/D'_i. Inverse of
    reflection_two_mic; used for round-trip verification and synthetic data.
    """
    r0 = np.broadcast_to(np.asarray(r0, dtype=np.complex128), (len(grid),))
    k0 = grid.wavenumbers(air)
    mics = geom.mic_positions
    src = geom.source_position
    img = geom.image_source_position
    p = []
    for mic in mics:
        dd = np.linalg.norm(mic - src)
        di = np.linalg.norm(mic - img)
        p.append(np.exp(-1j * k0 * dd) / dd + r0 * np.exp(-1j * k0 * di) / di)
    return TransferSpectrum(p[0] / p[1], grid, geometry=geom)


# ---------------------------------------------------------------------------
# Measured-data ingestion
# ---------------------------------------------------------------------------

def load_measured_csv(path, delimiter: str = ","):
    """Read a measured transfer-function CSV.

    Expected header: frequency_hz, re_h12, im_h12 and optionally
    re_hc, im_hc. Returns (frequencies, h12, hc-or-None).
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        required = {"frequency_hz", "re_h12", "im_h12"}
        fields = set(reader.fieldnames or ())
        if not required <= fields:
            raise ValueError(
                f"{path}: expected columns {sorted(required)}, found {sorted(fields)}"
            )
        has_hc = {"re_hc", "im_hc"} <= fields
        f, h12, hc = [], [], []
        for row in reader:
            f.append(float(row["frequency_hz"]))
            h12.append(float(row["re_h12"]) + 1j * float(row["im_h12"]))
            if has_hc:
                hc.append(float(row["re_hc"]) + 1j * float(row["im_hc"]))
    if not f:
        raise ValueError(f"{path}: no data rows")
    return (
        np.asarray(f),
        np.asarray(h12),
        np.asarray(hc) if has_hc else None,
    )


def load_geometry_sidecar(path) -> ScenarioGeometry:
    """Read the geometry JSON accompanying a measured CSV."""
    data = json.loads(Path(path).read_text())
    try:
        return ScenarioGeometry(
            lx=data["lx_m"],
            ly=data["ly_m"],
            source_distance=data["source_distance_m"],
            elevation_deg=data.get("elevation_deg", 0.0),
            azimuth_deg=data.get("azimuth_deg", 0.0),
            mic_heights=tuple(data.get("mic_heights_m", (0.01, 0.03))),
        )
    except KeyError as exc:
        raise ValueError(f"{path}: missing geometry field {exc}") from exc
