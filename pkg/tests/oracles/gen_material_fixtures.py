"""Regenerate material-model regression fixtures with mpmath (50 digits).

Evaluates the closed-form characteristic properties, the rigid-backed layer
surface impedance, and the plane-interface reflection/absorption completely
independently of the package, then freezes the values to float precision in
tests/fixtures/material_fixtures.json.

Run from the repository root:

    python tests/oracles/gen_material_fixtures.py
"""

import json
import pathlib

import mpmath as mp

mp.mp.dps = 50

C0 = mp.mpf("343.0")
RHO0 = mp.mpf("1.21")
Z0 = C0 * RHO0


def characteristics(f, sigma):
    """Miki Zc and kp; sigma in kN s/m^4, coefficient set (5.50, 8.43, 7.81, 11.41)."""
    zeta = f / sigma
    za = zeta ** mp.mpf("-0.632")
    zb = zeta ** mp.mpf("-0.618")
    zc = Z0 * (1 + mp.mpf("5.50") * za - 1j * mp.mpf("8.43") * za)
    k0 = 2 * mp.pi * f / C0
    kp = k0 * (1 + mp.mpf("7.81") * zb - 1j * mp.mpf("11.41") * zb)
    return zc, kp


def surface_impedance(f, sigma, d, theta_deg):
    zc, kp = characteristics(f, sigma)
    k0 = 2 * mp.pi * f / C0
    st = mp.sin(mp.radians(theta_deg))
    cos_t = mp.sqrt(1 - (k0 / kp * st) ** 2)
    arg = kp * d * cos_t
    return -1j * (zc / cos_t) * mp.cos(arg) / mp.sin(arg)


def reflection(zs, theta_deg):
    ct = mp.cos(mp.radians(theta_deg))
    return (zs * ct - Z0) / (zs * ct + Z0)


def c_pair(z):
    return [float(mp.re(z)), float(mp.im(z))]


def main():
    fixtures = {
        "_provenance": (
            "mpmath 50-digit evaluation of the Miki layer model, c0=343 m/s, "
            "rho0=1.21 kg/m^3, sigma in kN s/m^4; regenerate with "
            "tests/oracles/gen_material_fixtures.py"
        ),
        "cases": [],
    }

    for f, sigma in [(1000, "54.7"), (250, "54.7"), (1990, "10.0"), (100, "5.0")]:
        zc, kp = characteristics(mp.mpf(f), mp.mpf(sigma))
        fixtures["cases"].append(
            {
                "kind": "characteristics",
                "f_hz": f,
                "sigma_kns_m4": float(mp.mpf(sigma)),
                "zc": c_pair(zc),
                "kp": c_pair(kp),
            }
        )

    for f, sigma, d, theta in [
        (1000, "54.7", "0.02", 0),
        (1000, "54.7", "0.02", 45),
        (500, "20.0", "0.1", 60),
    ]:
        zs = surface_impedance(mp.mpf(f), mp.mpf(sigma), mp.mpf(d), theta)
        r = reflection(zs, theta)
        fixtures["cases"].append(
            {
                "kind": "surface",
                "f_hz": f,
                "sigma_kns_m4": float(mp.mpf(sigma)),
                "d_m": float(mp.mpf(d)),
                "theta_deg": theta,
                "zs": c_pair(zs),
                "r": c_pair(r),
                "alpha": float(1 - mp.fabs(r) ** 2),
            }
        )

    out = pathlib.Path(__file__).resolve().parents[1] / "fixtures" / "material_fixtures.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(fixtures, indent=2) + "\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
