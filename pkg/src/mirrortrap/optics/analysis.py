"""Spot, cross-talk, misalignment and collection-efficiency analyses.

Field heights displace the micromirror (and ion) along ``+x``; the detector
is displaced the same distance along ``-x``, as a 1:1 relay inverts.  The
trap axis maps onto the optics ``y`` axis and the ion height onto ``z``.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from ..analytic import MirrorSpec, cone_efficiency
from .rays import DIRECT, MIRROR, PLANAR, Micromirror, RayBundle, reflect_mirror, sample_emission
from .system import HIT, OpticalPrescription, trace

PMT_QE = 0.205
REFLECTIVITY = 0.85
REFERENCE_MIRROR = MirrorSpec(150.0, 60.0)


@dataclass
class SpotReport:
    """Image-plane statistics of one traced emission bundle.

    ``enclosed``, ``outside``, ``vignetted`` and ``absorbed`` are fractions
    of the emitted weight and sum to one: light landing inside the detector,
    landing elsewhere on the image plane, blocked (or lost) in the relay, and
    absorbed at the trap surface.  Spot radii describe the specular
    (mirror-reflected) rays about their centroid.
    """

    field_height: float
    offset: tuple
    spot_radius: float
    rms_radius: float
    centroid: tuple
    enclosed: float
    outside: float
    vignetted: float
    absorbed: float
    detector: tuple = (0.0, 0.0)
    detector_radius: float = 0.25
    n_rays: int = 0
    specular_enclosed: float = math.nan

    @property
    def collected(self):
        return self.enclosed + self.outside

    @property
    def enclosed_fraction(self):
        """Fraction of the light reaching the image plane that lands on the detector."""
        return self.enclosed / self.collected if self.collected > 0 else 0.0

    @property
    def crosstalk(self):
        return self.outside / self.collected if self.collected > 0 else 0.0

    def detected(self, qe=PMT_QE):
        """Detected photons per emitted photon."""
        return qe * self.enclosed


def ion_at_focus(mirror: Micromirror, dx=0.0, dy=0.0, dz=0.0):
    return mirror.focus() + np.array([dx, dy, dz])


def spot_report(prescription: OpticalPrescription, mirror: Micromirror, ion, detector,
                n=200_000, seed=0, reflectivity=REFLECTIVITY, planar_reflectivity=0.0,
                detector_radius=0.25, field_height=0.0, offset=(0.0, 0.0)):
    """Trace full-sphere emission from ``ion`` via ``mirror`` through the relay."""
    bundle = sample_emission(ion, n, seed)
    refl = reflect_mirror(bundle, mirror, reflectivity, planar_reflectivity)
    res = trace(prescription, refl)
    w = refl.weights
    hit = res.status == HIT
    r_det = np.hypot(res.x - detector[0], res.y - detector[1])
    inside = hit & (r_det <= detector_radius)
    emitted = bundle.emitted
    enclosed = w[inside].sum() / emitted
    outside = w[hit & ~inside].sum() / emitted
    vignetted = w[~hit].sum() / emitted
    absorbed = (emitted - w.sum()) / emitted
    spec = hit & (refl.tags == MIRROR)
    if np.any(spec) and w[spec].sum() > 0:
        ws = w[spec]
        cx = np.average(res.x[spec], weights=ws)
        cy = np.average(res.y[spec], weights=ws)
        r = np.hypot(res.x[spec] - cx, res.y[spec] - cy)
        radius, rms = float(r.max()), float(np.sqrt(np.average(r * r, weights=ws)))
        spec_in = float(ws[r_det[spec] <= detector_radius].sum() / ws.sum())
    else:
        cx = cy = radius = rms = spec_in = math.nan
    return SpotReport(field_height, tuple(offset), radius, rms, (float(cx), float(cy)),
                      float(enclosed), float(outside), float(vignetted), float(absorbed),
                      tuple(detector), detector_radius, n, spec_in)


def spot_vs_field_height(prescription, mirror: MirrorSpec = REFERENCE_MIRROR, heights=(0.0,),
                         n=200_000, seed=0, reflectivity=REFLECTIVITY, **kwargs):
    """SpotReport per field height (mm), with mirror and detector displaced oppositely."""
    base = Micromirror.from_spec(mirror)
    out = []
    for h in heights:
        m = base.shifted(h, 0.0)
        out.append(spot_report(prescription, m, ion_at_focus(m), (-h, 0.0), n, seed,
                               reflectivity, field_height=h, **kwargs))
    return out


def crosstalk_ratio(prescription, mirror: MirrorSpec = REFERENCE_MIRROR, field_height=0.0,
                    n=400_000, seed=0, reflectivity=REFLECTIVITY, detector_radius=0.25,
                    planar_reflectivity=REFLECTIVITY):
    """Fraction of collected light (direct plus reflected) outside the assigned detector.

    Light reaching any other point of the image plane is counted, so this is
    an upper bound on the cross-talk into neighbouring detectors.
    """
    rep = spot_vs_field_height(prescription, mirror, [field_height], n, seed, reflectivity,
                               detector_radius=detector_radius,
                               planar_reflectivity=planar_reflectivity)[0]
    return rep.crosstalk


def misalignment_scan(prescription, mirror: MirrorSpec = REFERENCE_MIRROR, axial_offsets=(),
                      vertical_offsets=(), heights=(0.0, 8.0), n=200_000, seed=0,
                      reflectivity=REFLECTIVITY):
    """Spot reports for ion offsets (um) from the mirror focus; the detector stays put.

    ``axial_offsets`` move the ion along the trap axis (optics ``y``),
    ``vertical_offsets`` along the mirror axis.  Returns a list of
    ``(direction, offset_um, SpotReport)``.
    """
    base = Micromirror.from_spec(mirror)
    rows = []
    for h in heights:
        m = base.shifted(h, 0.0)
        for direction, offsets in (("axial", axial_offsets), ("vertical", vertical_offsets)):
            for off in offsets:
                d = off * 1e-3
                ion = ion_at_focus(m, dy=d) if direction == "axial" else ion_at_focus(m, dz=d)
                rep = spot_report(prescription, m, ion, (-h, 0.0), n, seed, reflectivity,
                                  field_height=h,
                                  offset=(0.0, off) if direction == "axial" else (off, 0.0))
                rows.append((direction, float(off), rep))
    return rows


def min_separation(prescription, mirror: MirrorSpec = REFERENCE_MIRROR, field_height=0.0,
                   n=200_000, seed=0, reflectivity=REFLECTIVITY,
                   planar_reflectivity=REFLECTIVITY, detector_radius=0.25):
    """Smallest mirror pitch (mm) at which no collected ray reaches a neighbour's detector.

    Equals the largest image-plane distance of any collected ray from the
    assigned detector centre plus the detector radius.
    """
    m = Micromirror.from_spec(mirror).shifted(field_height, 0.0)
    bundle = reflect_mirror(sample_emission(ion_at_focus(m), n, seed), m, reflectivity,
                            planar_reflectivity)
    res = trace(prescription, bundle)
    ok = (res.status == HIT) & (bundle.weights > 0)
    r = np.hypot(res.x[ok] + field_height, res.y[ok])
    return float(r.max() + detector_radius)


# -- collection efficiency ---------------------------------------------------


@dataclass
class EfficiencyResult:
    efficiency: float  # fraction of 4 pi
    stderr: float
    n_rays: int
    oracle: float = math.nan
    by_tag: dict = field(default_factory=dict)

    def detected(self, qe=PMT_QE):
        return qe * self.efficiency


def _accepted(d, na):
    return d[:, 2] >= math.sqrt(1.0 - na * na)


def collection_efficiency(mirror: MirrorSpec = None, na=0.14, reflectivity=REFLECTIVITY,
                          n=1_000_000, seed=0, ion_height=None, planar_reflectivity=None,
                          detector_na=None):
    """Monte-Carlo fraction of 4 pi collected by a relay of numerical aperture ``na``.

    The trap surface is an infinite plane of reflectivity ``planar_reflectivity``
    (``reflectivity`` by default) around the mirror.  ``mirror=None`` models a
    planar region only.  A ray counts if, after at most one reflection, it
    travels within the relay's acceptance cone.  ``ion_height`` (um above the
    plane) defaults to the mirror's paraxial focus, else 62.5 um.
    """
    planar_reflectivity = reflectivity if planar_reflectivity is None else planar_reflectivity
    if mirror is not None:
        m = Micromirror.from_spec(mirror)
        ion = m.focus() if ion_height is None else np.array([0.0, 0.0, ion_height * 1e-3])
    else:
        m = Micromirror(1.0, 0.0, 0.0)
        h = 62.5 if ion_height is None else ion_height
        ion = np.array([0.0, 0.0, h * 1e-3])
    bundle = sample_emission(ion, n, seed)
    refl = reflect_mirror(bundle, m, reflectivity, planar_reflectivity)
    ok = _accepted(refl.directions, na if detector_na is None else detector_na)
    w = np.where(ok, refl.weights, 0.0)
    eff = w.sum() / bundle.emitted
    # stratification makes this conservative
    stderr = w.std(ddof=1) / math.sqrt(n)
    by_tag = {name: float(w[refl.tags == tag].sum() / bundle.emitted)
              for tag, name in ((DIRECT, "direct"), (MIRROR, "mirror"), (PLANAR, "planar"))}
    oracle = efficiency_oracle(mirror, na, reflectivity, ion[2] * 1e3, planar_reflectivity)
    return EfficiencyResult(float(eff), float(stderr), n, oracle, by_tag)


def efficiency_oracle(mirror: MirrorSpec, na, reflectivity, ion_height_um,
                      planar_reflectivity=None):
    """Deterministic solid-angle sum for an on-axis ion.

    Emission at polar angle ``t`` from the downward axis either hits the cap
    (inside the rim half-angle), reflects with direction found exactly from
    the sphere geometry, or hits the plane and leaves at the mirrored angle.
    The collected fraction is the integral over ``sin t dt / 2`` of the
    accepted weight, plus the direct cone.
    """
    planar_reflectivity = reflectivity if planar_reflectivity is None else planar_reflectivity
    cos_na = math.sqrt(1.0 - na * na)
    direct = cone_efficiency(na)
    if mirror is None:
        rim = 0.0
    else:
        rim = math.atan2(mirror.aperture_radius, ion_height_um)
    t_na = math.asin(na)

    def cap_accept(t):
        # downward ray at angle t from -z, meridional plane (x, z), mm-free units
        roc = mirror.roc
        c = np.array([0.0, roc - mirror.sag])
        o = np.array([0.0, ion_height_um])
        d = np.array([math.sin(t), -math.cos(t)])
        rel = o - c
        b = rel @ d
        s = -b + math.sqrt(b * b - (rel @ rel - roc * roc))
        p = o + s * d
        nrm = (p - c) / roc
        out = d - 2 * (d @ nrm) * nrm
        return out[1] >= cos_na

    total = direct
    # planar surround: collected when the mirrored angle is inside the cone
    lo = max(rim, 0.0)
    if t_na > lo and planar_reflectivity > 0:
        total += planar_reflectivity * 0.5 * (math.cos(lo) - math.cos(t_na))
    if mirror is not None and rim > 0 and reflectivity > 0:
        val, _ = quad(lambda t: 0.5 * math.sin(t) * cap_accept(t), 0.0, rim, limit=200,
                      points=[t_na] if t_na < rim else None)
        total += reflectivity * val
    return total
