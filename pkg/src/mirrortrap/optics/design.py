"""Re-derived 1:1 relay built from four 2-inch plano-convex lenses.

Two lens pairs face each other with their curved sides inwards.  The object
plane sits at the front focal plane of the first pair and the aperture stop
at its back focal plane, so the relay is telecentric on both sides and
images with magnification -1.  The curvatures, the lens spacing and the
image-plane focus shift are tuned by ``optimize_relay`` so that the light
of full-NA point sources stays compact over the 16 mm field.
"""
import json
import math
from dataclasses import asdict, dataclass
from importlib import resources

import numpy as np
from scipy.optimize import minimize

from .rays import RayBundle
from .system import REFRACT, STOP, OpticalPrescription, OpticalSurface, trace

FUSED_SILICA_397 = 1.4701  # Sellmeier value at 397 nm
CLEAR_RADIUS = 22.9  # mm, 90% of a 2-inch lens
DESIGN_FIELDS = (0.0, 2.0, 4.0, 6.0, 8.0)  # mm
ENERGY_RADIUS = 0.15  # mm
RMS_WEIGHT = 0.01


class DesignError(ValueError):
    pass


@dataclass(frozen=True)
class RelayDesign:
    r1: float = 150.0  # outer lens convex radius, mm
    r2: float = 150.0  # inner lens convex radius, mm
    gap: float = 2.0  # air gap between the lenses of a pair, mm
    thickness: float = 10.0
    aperture: float = CLEAR_RADIUS
    index: float = FUSED_SILICA_397
    na: float = 0.14
    focus_shift: float = 0.0  # image plane offset from the paraxial image, mm

    def group(self):
        """First lens pair, starting at z = 0."""
        t, g = self.thickness, self.gap
        return [OpticalSurface(REFRACT, 0.0, self.aperture, None, self.index),
                OpticalSurface(REFRACT, t, self.aperture, -self.r1, 1.0),
                OpticalSurface(REFRACT, t + g, self.aperture, None, self.index),
                OpticalSurface(REFRACT, 2 * t + g, self.aperture, -self.r2, 1.0)]

    def focal_data(self):
        """(front focal distance, back focal distance, efl) of one pair."""
        surfs = self.group()
        m = OpticalPrescription(surfs, surfs[-1].z, 0.0).system_matrix(0.0, surfs[-1].z)
        (a, _), (c, d) = m
        if c >= 0:
            raise DesignError("lens pair is not converging")
        return -d / c, -a / c, -1.0 / c

    def build(self):
        ffd, bfd, efl = self.focal_data()
        if ffd <= 0 or bfd <= 0:
            raise DesignError("focal points fall inside the lens pair")
        t, g = self.thickness, self.gap
        z = ffd
        surfaces = [OpticalSurface(s.kind, s.z + z, s.aperture, s.radius, s.index)
                    for s in self.group()]
        stop_z = surfaces[-1].z + bfd
        stop_r = self.na / math.sqrt(1 - self.na**2) * efl
        if stop_r > self.aperture:
            raise DesignError("stop larger than the lens aperture")
        surfaces.append(OpticalSurface(STOP, stop_z, stop_r))
        z = stop_z + bfd
        surfaces += [OpticalSurface(REFRACT, z, self.aperture, self.r2, self.index),
                     OpticalSurface(REFRACT, z + t, self.aperture, None, 1.0),
                     OpticalSurface(REFRACT, z + t + g, self.aperture, self.r1, self.index),
                     OpticalSurface(REFRACT, z + 2 * t + g, self.aperture, None, 1.0)]
        image = surfaces[-1].z + ffd + self.focus_shift
        meta = {"design": asdict(self), "efl_mm": efl, "stop_radius_mm": stop_r,
                "glass": "fused silica", "wavelength_nm": 397.0}
        return OpticalPrescription(surfaces, image, 0.0, meta=meta)


def point_bundle(x, na, rings=8, spokes=24):
    """Polar grid of rays from ``(x, 0, 0)`` filling a cone of ``na`` about ``+z``.

    Rings are equally spaced in ``sin`` of the polar angle, so each ring
    carries pupil area proportional to its radius.  Weights are normalised
    to sum to one.
    """
    rho = (np.arange(rings) + 0.5) / rings * na
    pts = [(0.0, 0.0, 1.0)]
    w = [0.0]
    for r in rho:
        k = max(int(round(spokes * r / na)), 6)
        phi = np.arange(k) * 2 * math.pi / k
        ct = math.sqrt(1 - r * r)
        pts += [(r * math.cos(p), r * math.sin(p), ct) for p in phi]
        w += [r / k] * k
    d = np.array(pts)
    w = np.array(w)
    w[0] = w[1:].min()
    o = np.zeros_like(d)
    o[:, 0] = x
    return RayBundle(o, d, w / w.sum(), 0)


def spot_metrics(prescription, x, na, rings=8, magnification=-1.0):
    """(rms radius, max radius, vignetted weight fraction) of a point source at ``x``.

    Radii are measured from the ideal image point ``magnification * x``.
    """
    b = point_bundle(x, na, rings)
    res = trace(prescription, b)
    ok = res.hit
    if ok.sum() < 3:
        return math.inf, math.inf, 1.0
    w = b.weights[ok]
    r2 = (res.x[ok] - magnification * x) ** 2 + res.y[ok] ** 2
    return (math.sqrt(np.average(r2, weights=w)), math.sqrt(r2.max()),
            1.0 - w.sum() / b.weights.sum())


def relay_merit(design: RelayDesign, fields=DESIGN_FIELDS, target=ENERGY_RADIUS):
    """Encircled-energy merit (mm^2) over ``fields`` for full-NA point sources.

    Mean squared excess of the ray distance from the ideal image point over
    ``target``, plus a small RMS term that keeps the spot compact.
    """
    try:
        rx = design.build()
    except DesignError:
        return 1e6
    total = 0.0
    for h in fields:
        b = point_bundle(h, design.na, 12, 36)
        res = trace(rx, b)
        ok = res.hit
        if ok.sum() < 3:
            return 1e6
        w = b.weights[ok]
        r = np.hypot(res.x[ok] + h, res.y[ok])
        total += (np.sum(w * np.maximum(r - target, 0.0) ** 2)
                  + RMS_WEIGHT * np.sum(w * r * r)) / w.sum()
    return total / len(fields)


def optimize_relay(start: RelayDesign = None, maxiter=800):
    """Nelder-Mead over both convex radii, the pair gap and the focus shift."""
    start = start or RelayDesign()

    def unpack(p):
        return RelayDesign(float(p[0]), float(p[1]), max(float(p[2]), 0.5), start.thickness,
                           start.aperture, start.index, start.na, float(p[3]))

    def f(p):
        return relay_merit(unpack(p))

    p0 = [start.r1, start.r2, start.gap, start.focus_shift]
    res = minimize(f, p0, method="Nelder-Mead",
                   options={"maxiter": maxiter, "xatol": 1e-4, "fatol": 1e-14})
    best = unpack(res.x)
    return best, float(res.fun)


DESIGN_STARTS = ((120.0, 120.0, 2.0), (150.0, 150.0, 2.0), (100.0, 200.0, 2.0),
                 (125.0, 185.0, 0.5))


def design_relay(starts=DESIGN_STARTS, maxiter=800):
    """Best of several Nelder-Mead runs; this produced the shipped relay."""
    best = None
    for r1, r2, gap in starts:
        d, f = optimize_relay(RelayDesign(r1, r2, gap, focus_shift=-0.3), maxiter)
        if best is None or f < best[1]:
            best = (d, f)
    return best


def load_relay():
    """The shipped relay prescription."""
    path = resources.files("mirrortrap").joinpath("data/relay.json")
    with path.open() as fh:
        return OpticalPrescription.from_dict(json.load(fh))
