"""Independent reference values for the test suite.

Run ``python tests/oracles/generate.py`` to rebuild ``frozen.json``.  Nothing
here imports the package: closed forms are evaluated with mpmath at 50
digits and the planar-electrode potentials by adaptive quadrature of the
defining surface integral.
"""
import json
from pathlib import Path

import mpmath as mp
import numpy as np
from scipy.integrate import dblquad

mp.mp.dps = 50
OUT = Path(__file__).with_name("frozen.json")

# L-shaped electrode as a union of two rectangles (a0, a1, b0, b1)
L_RECTS = [(0.0, 80.0, 0.0, 30.0), (0.0, 30.0, 30.0, 120.0)]
L_POLYGON = [[0.0, 0.0], [80.0, 0.0], [80.0, 30.0], [30.0, 30.0], [30.0, 120.0], [0.0, 120.0]]


def ring_radius(h, theta):
    h, theta = mp.mpf(h), mp.mpf(theta)
    return h * mp.sqrt(mp.mpf(3) / 4 / mp.sin(mp.pi / 6 + theta) ** 2 - 1)


def sag(roc, r):
    roc, r = mp.mpf(roc), mp.mpf(r)
    return roc - mp.sqrt(roc**2 - r**2)


def plane_potential(a, b, h):
    """(h / 2 pi) * integral of dA / (rho^2 + h^2)^(3/2) over the electrode."""
    total = 0.0
    for a0, a1, b0, b1 in L_RECTS:
        val, _ = dblquad(lambda y, x: h / ((x - a) ** 2 + (y - b) ** 2 + h * h) ** 1.5,
                         a0, a1, b0, b1, epsabs=1e-13, epsrel=1e-11)
        total += val
    return total / (2 * np.pi)


def main():
    out = {}
    out["ring_radius_h100_theta0.1"] = float(ring_radius(100, "0.1"))
    out["ring_radius_h63_theta0"] = float(ring_radius(63, 0))
    out["sag_150_60"] = float(sag(150, 60))
    out["sag_178_50.5"] = float(sag(178, "50.5"))
    # fabricated mirror: ion 63 um above the rim plane
    out["na_fabricated"] = float(mp.sin(mp.atan(mp.mpf("50.5") / 63)))
    # ideal mirror: ion at roc/2 above the vertex
    rise = 75 - sag(150, 60)
    phi = mp.atan(60 / rise)
    out["na_ideal"] = float(mp.sin(phi))
    out["eta_ideal"] = float((1 - mp.cos(phi)) / 2)
    refl = mp.mpf("0.85")
    for na in ("0.43", "0.14"):
        cone = (1 - mp.sqrt(1 - mp.mpf(na) ** 2)) / 2
        # every ray off the cap leaves within the relay cone for both NAs
        out[f"efficiency_mirror_na{na}"] = float(cone + refl * (1 - mp.cos(phi)) / 2)
        out[f"efficiency_planar_na{na}"] = float(cone * (1 + refl))
        out[f"cone_na{na}"] = float(cone)
    out["beta_for_ratio_0.06"] = float(
        mp.findroot(lambda b: (mp.besselj(1, b) / mp.besselj(0, b)) ** 2 - mp.mpf("0.06"), 0.5))

    rng = np.random.default_rng(20240601)
    pts = np.column_stack([rng.uniform(-60, 140, 20), rng.uniform(-60, 180, 20),
                           rng.uniform(5, 100, 20)])
    out["plane_polygon"] = L_POLYGON
    out["plane_points"] = pts.tolist()
    out["plane_potentials"] = [plane_potential(*p) for p in pts]
    OUT.write_text(json.dumps(out, indent=2) + "\n")


if __name__ == "__main__":
    main()
