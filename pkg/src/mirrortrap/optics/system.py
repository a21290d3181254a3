"""Sequential optical prescriptions and exact 3-D ray tracing.

Surfaces are placed along ``z`` (mm).  A spherical surface with signed
radius ``R`` has its vertex at ``z`` and its centre of curvature at
``z + R``; ``R = None`` (or inf) is a plane.
"""
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .rays import RayBundle, reflect_specular

REFRACT = "refract"
MIRROR = "mirror"
STOP = "stop"
KINDS = (REFRACT, MIRROR, STOP)

# trace status codes
HIT = 0
VIGNETTED = 1
LOST = 2  # total internal reflection or no forward intersection
DETECTOR_RADIUS = 0.25


@dataclass(frozen=True)
class OpticalSurface:
    kind: str
    z: float
    aperture: float
    radius: float = None
    index: float = 1.0  # refractive index after the surface

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown surface kind {self.kind!r}")
        if not self.aperture > 0:
            raise ValueError("surface aperture must be positive")
        if self.radius is not None and (self.radius == 0 or math.isinf(self.radius)):
            object.__setattr__(self, "radius", None)
        if self.index <= 0:
            raise ValueError("refractive index must be positive")

    @property
    def is_plane(self):
        return self.radius is None

    @property
    def curvature(self):
        return 0.0 if self.radius is None else 1.0 / self.radius


@dataclass(frozen=True)
class Detector:
    center: tuple  # (x, y) mm in the image plane
    radius: float = DETECTOR_RADIUS


@dataclass
class OpticalPrescription:
    """Surfaces in propagation order ending at the image (detector) plane ``image_z``.

    ``object_z`` is the nominal object plane, and ``detectors`` the detector
    grid in the image plane.  Surfaces after a mirror are traversed with
    rays travelling towards ``-z``.
    """

    surfaces: list
    image_z: float
    object_z: float = 0.0
    detectors: list = field(default_factory=lambda: [Detector((0.0, 0.0))])
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.surfaces = list(self.surfaces)
        self.detectors = [d if isinstance(d, Detector) else Detector(tuple(d[0]), d[1])
                          for d in self.detectors]

    def indices(self):
        """Refractive index before each surface (starting in air)."""
        n = [1.0]
        for s in self.surfaces:
            if s.kind == REFRACT:
                n.append(s.index)
            else:
                n.append(n[-1])
        return n

    def with_detector(self, center, radius=DETECTOR_RADIUS):
        return OpticalPrescription(self.surfaces, self.image_z, self.object_z,
                                   [Detector(tuple(center), radius)], dict(self.meta))

    def with_image_z(self, image_z):
        return OpticalPrescription(self.surfaces, image_z, self.object_z, self.detectors,
                                   dict(self.meta))

    # -- serialisation: thickness form -------------------------------------

    def to_dict(self):
        rows = []
        for i, s in enumerate(self.surfaces):
            nxt = self.surfaces[i + 1].z if i + 1 < len(self.surfaces) else self.image_z
            rows.append({"kind": s.kind, "radius_mm": s.radius, "aperture_mm": s.aperture,
                         "thickness_mm": nxt - s.z, "index": s.index})
        first = self.surfaces[0].z if self.surfaces else self.image_z
        return {"object_distance_mm": first - self.object_z, "surfaces": rows,
                "detectors": [{"center_mm": list(d.center), "radius_mm": d.radius}
                              for d in self.detectors],
                "meta": self.meta}

    @classmethod
    def from_dict(cls, d):
        z = float(d.get("object_z_mm", 0.0))
        obj = z
        try:
            z += float(d["object_distance_mm"])
            surfaces = []
            for k, row in enumerate(d["surfaces"]):
                try:
                    surfaces.append(OpticalSurface(row["kind"], z, float(row["aperture_mm"]),
                                                   row.get("radius_mm"),
                                                   float(row.get("index", 1.0))))
                    z += float(row["thickness_mm"])
                except KeyError as exc:
                    raise ValueError(f"surfaces[{k}]: missing field {exc}") from None
        except KeyError as exc:
            raise ValueError(f"prescription missing field {exc}") from None
        dets = [Detector(tuple(x["center_mm"]), float(x.get("radius_mm", DETECTOR_RADIUS)))
                for x in d.get("detectors", [{"center_mm": [0.0, 0.0]}])]
        return cls(surfaces, z, obj, dets, dict(d.get("meta", {})))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    # -- paraxial optics -----------------------------------------------------

    def system_matrix(self, z_from=None, z_to=None):
        """ABCD matrix for (height, reduced angle n*u) from ``z_from`` to ``z_to``."""
        z = self.object_z if z_from is None else z_from
        z_to = self.image_z if z_to is None else z_to
        m = np.eye(2)
        n = 1.0
        for s in self.surfaces:
            if s.z > z_to:
                break
            if s.z < z:
                continue
            if s.kind == MIRROR:
                raise ValueError("paraxial matrices are only provided for refracting systems")
            m = _translate(s.z - z, n) @ m
            if s.kind == REFRACT:
                m = np.array([[1.0, 0.0], [-(s.index - n) * s.curvature, 1.0]]) @ m
                n = s.index
            z = s.z
        return _translate(z_to - z, n) @ m

    def paraxial_image(self):
        """Image distance after the last surface and lateral magnification."""
        last = self.surfaces[-1].z if self.surfaces else self.object_z
        m = self.system_matrix(z_to=last)
        a, b = m[0]
        c, d = m[1]
        n = self.indices()[-1]
        # find t with (a + t c / n) * 0 + (b + t d / n) = 0 for the image condition
        if d == 0:
            return math.inf, math.nan
        t = -b * n / d
        return last + t, a + t * c / n


def _translate(length, n):
    return np.array([[1.0, length / n], [0.0, 1.0]])


def refract(d, normal, n1, n2):
    """Vector Snell's law.  ``normal`` is flipped to oppose ``d``.

    Returns new directions and a mask of rays undergoing total internal
    reflection (their directions are left unchanged).
    """
    normal = np.where((np.sum(d * normal, axis=1) > 0)[:, None], -normal, normal)
    eta = n1 / n2
    cos_i = -np.sum(d * normal, axis=1)
    k = 1.0 - eta * eta * (1.0 - cos_i * cos_i)
    tir = k < 0
    out = eta * d + (eta * cos_i - np.sqrt(np.clip(k, 0.0, None)))[:, None] * normal
    out[tir] = d[tir]
    return out / np.linalg.norm(out, axis=1)[:, None], tir


def _intersect(s: OpticalSurface, o, d):
    """Distance to surface ``s`` along each ray (nan if missed)."""
    if s.is_plane:
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (s.z - o[:, 2]) / d[:, 2]
        t[~np.isfinite(t)] = np.nan
        return t, np.broadcast_to(np.array([0.0, 0.0, -1.0]), o.shape)
    c = np.array([0.0, 0.0, s.z + s.radius])
    rel = o - c
    b = np.sum(rel * d, axis=1)
    disc = b * b - (np.sum(rel * rel, axis=1) - s.radius**2)
    root = np.sqrt(np.where(disc >= 0, disc, np.nan))
    t1, t2 = -b - root, -b + root
    # keep the intersection on the vertex side of the sphere
    side = np.sign(-s.radius)

    def good(t):
        zh = o[:, 2] + t * d[:, 2]
        return (t > 1e-12) & ((zh - c[2]) * side > 0)

    t = np.where(good(t1), t1, np.where(good(t2), t2, np.nan))
    hit = o + t[:, None] * d
    return t, (hit - c) / s.radius


@dataclass
class TraceResult:
    """Image-plane hits of a traced bundle.

    ``status`` is HIT, VIGNETTED or LOST per ray.  ``x``/``y`` are valid
    where status is HIT.  ``weights`` are those carried on arrival (or at the
    point of loss); ``emitted`` is the bundle's reference weight.
    """

    x: np.ndarray
    y: np.ndarray
    weights: np.ndarray
    tags: np.ndarray
    status: np.ndarray
    emitted: float
    directions: np.ndarray = None

    @property
    def hit(self):
        return self.status == HIT


def trace(prescription: OpticalPrescription, bundle: RayBundle, record_snell=False):
    """Trace every ray through the prescription to its image plane.

    Rays meeting a surface outside its aperture, or stops, are vignetted;
    rays with total internal reflection or without a forward intersection
    are lost.  With ``record_snell`` the per-refraction ``(n1 sin i, n2 sin t)``
    pairs are returned as well.
    """
    o = bundle.origins.copy()
    d = bundle.directions.copy()
    status = np.full(len(o), HIT, dtype=np.int8)
    n = 1.0
    snell = []
    for s in prescription.surfaces:
        live = status == HIT
        if not np.any(live):
            break
        t, normal = _intersect(s, o[live], d[live])
        idx = np.nonzero(live)[0]
        miss = ~np.isfinite(t) | (t <= 0)
        status[idx[miss]] = LOST
        idx, t, normal = idx[~miss], t[~miss], normal[~miss]
        hit = o[idx] + t[:, None] * d[idx]
        out = np.hypot(hit[:, 0], hit[:, 1]) > s.aperture
        status[idx[out]] = VIGNETTED
        idx, hit, normal = idx[~out], hit[~out], normal[~out]
        o[idx] = hit
        if s.kind == REFRACT:
            new, tir = refract(d[idx], normal, n, s.index)
            if record_snell:
                nn = np.where((np.sum(d[idx] * normal, axis=1) > 0)[:, None], -normal, normal)
                si = np.linalg.norm(np.cross(d[idx], nn), axis=1)
                st = np.linalg.norm(np.cross(new, nn), axis=1)
                snell.append((n * si[~tir], s.index * st[~tir]))
            status[idx[tir]] = LOST
            d[idx[~tir]] = new[~tir]
            n = s.index
        elif s.kind == MIRROR:
            nn = normal / np.linalg.norm(normal, axis=1)[:, None]
            d[idx] = reflect_specular(d[idx], nn)
    live = status == HIT
    x = np.full(len(o), np.nan)
    y = np.full(len(o), np.nan)
    if np.any(live):
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (prescription.image_z - o[live, 2]) / d[live, 2]
        idx = np.nonzero(live)[0]
        bad = ~np.isfinite(t) | (t < 0)
        status[idx[bad]] = LOST
        good = idx[~bad]
        x[good] = o[good, 0] + t[~bad] * d[good, 0]
        y[good] = o[good, 1] + t[~bad] * d[good, 1]
    res = TraceResult(x, y, bundle.weights.copy(), bundle.tags.copy(), status,
                      bundle.emitted, d)
    if record_snell:
        return res, snell
    return res
