"""Ray bundles, isotropic emission sampling and micromirror reflection.

The optics frame is right-handed with ``z`` along the relay axis, pointing
away from the trap surface, and the mirror rim plane at ``z = 0``.  Lengths
are in millimetres.
"""
import math
from dataclasses import dataclass

import numpy as np

from ..analytic import MirrorSpec

DIRECT = 0
MIRROR = 1
PLANAR = 2
TAG_NAMES = {DIRECT: "direct", MIRROR: "mirror", PLANAR: "planar"}


@dataclass
class RayBundle:
    """Rays with origins, unit directions, weights and provenance tags.

    ``emitted`` is the weight the bundle stands for.  It exceeds ``n`` when
    only a cone of the sphere was sampled, so weight fractions stay fractions
    of the full 4 pi emission.
    """

    origins: np.ndarray
    directions: np.ndarray
    weights: np.ndarray
    tags: np.ndarray
    emitted: float = None

    def __post_init__(self):
        self.origins = np.atleast_2d(np.asarray(self.origins, dtype=float))
        self.directions = np.atleast_2d(np.asarray(self.directions, dtype=float))
        n = len(self.origins)
        if self.directions.shape != (n, 3) or self.origins.shape != (n, 3):
            raise ValueError("origins and directions must both have shape (n, 3)")
        self.weights = np.broadcast_to(np.asarray(self.weights, dtype=float), (n,)).copy()
        self.tags = np.broadcast_to(np.asarray(self.tags, dtype=np.int8), (n,)).copy()
        norms = np.linalg.norm(self.directions, axis=1)
        if n and np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("ray directions must be unit vectors")
        if np.any(self.weights < 0) or np.any(self.weights > 1):
            raise ValueError("ray weights must lie in [0, 1]")
        if self.emitted is None:
            self.emitted = float(n)

    def __len__(self):
        return len(self.origins)

    def subset(self, mask):
        return RayBundle(self.origins[mask], self.directions[mask], self.weights[mask],
                         self.tags[mask], self.emitted)

    def scaled(self, factor):
        return RayBundle(self.origins, self.directions, self.weights * factor, self.tags,
                         self.emitted)


def _rng(seed):
    # Philox is counter based, so streams are reproducible independent of chunking
    return np.random.Generator(np.random.Philox(seed))


def sample_emission(ion, n, seed=0, axis=None, half_angle=math.pi):
    """Isotropic emission from ``ion`` (mm), stratified in ``cos`` of the polar angle.

    With ``axis`` and ``half_angle`` only the cone around ``axis`` is sampled
    (uniformly in solid angle) and ``emitted`` is scaled to the full sphere.
    """
    n = int(n)
    if n < 1:
        raise ValueError("need at least one ray")
    if not 0 < half_angle <= math.pi:
        raise ValueError("half_angle must lie in (0, pi]")
    rng = _rng(seed)
    c_min = math.cos(half_angle)
    u = (np.arange(n) + rng.random(n)) / n
    rng.shuffle(u)
    cos_t = 1.0 - u * (1.0 - c_min)
    sin_t = np.sqrt(np.clip(1.0 - cos_t**2, 0.0, None))
    phi = rng.uniform(0.0, 2 * math.pi, n)
    local = np.column_stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t])
    if axis is None:
        axis = (0.0, 0.0, 1.0)
    dirs = local @ _frame(np.asarray(axis, dtype=float))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    frac = 0.5 * (1.0 - c_min)
    origins = np.broadcast_to(np.asarray(ion, dtype=float), (n, 3))
    return RayBundle(origins, dirs, 1.0, DIRECT, n / frac)


def _frame(axis):
    """Rows (e1, e2, axis) of an orthonormal frame."""
    a = axis / np.linalg.norm(axis)
    helper = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(helper, a)
    e1 /= np.linalg.norm(e1)
    return np.array([e1, np.cross(a, e1), a])


@dataclass(frozen=True)
class Micromirror:
    """A MirrorSpec placed in the optics frame (mm), rim in the plane ``z = 0``."""

    roc: float
    aperture_radius: float
    sag: float
    center: tuple = (0.0, 0.0)  # (x, y) of the mirror axis

    @classmethod
    def from_spec(cls, m: MirrorSpec, center=(0.0, 0.0)):
        return cls(m.roc * 1e-3, m.aperture_radius * 1e-3, m.sag * 1e-3, tuple(center))

    def shifted(self, dx=0.0, dy=0.0):
        return Micromirror(self.roc, self.aperture_radius, self.sag,
                           (self.center[0] + dx, self.center[1] + dy))

    @property
    def sphere_center(self):
        return np.array([self.center[0], self.center[1], self.roc - self.sag])

    def focus(self):
        """Paraxial focus, ``roc/2`` above the vertex."""
        return np.array([self.center[0], self.center[1], 0.5 * self.roc - self.sag])


def reflect_specular(d, normal):
    return d - 2.0 * np.sum(d * normal, axis=1)[:, None] * normal


def reflect_mirror(bundle: RayBundle, mirror: Micromirror, reflectivity=0.85,
                   planar_reflectivity=0.0):
    """Reflect downward rays off the spherical cap (and optionally the flat surround).

    Rays hitting the cap inside the aperture reflect with weight multiplied by
    ``reflectivity`` and are tagged mirror.  Downward rays missing the cap meet
    the plane ``z = 0``; they reflect with ``planar_reflectivity`` and are
    tagged planar.  Upward rays pass unchanged.  The returned bundle has the
    same rays in the same order; the absorbed weight is ``emitted`` minus the
    new total for rays that were not lost upstream.
    """
    if not 0 <= reflectivity <= 1 or not 0 <= planar_reflectivity <= 1:
        raise ValueError("reflectivities must lie in [0, 1]")
    o = bundle.origins.copy()
    d = bundle.directions.copy()
    w = bundle.weights.copy()
    tags = bundle.tags.copy()
    down = d[:, 2] < 0
    c = mirror.sphere_center
    rel = o - c
    b = np.sum(rel * d, axis=1)
    disc = b * b - (np.sum(rel * rel, axis=1) - mirror.roc**2)
    ok = down & (disc >= 0)
    t = np.full(len(o), np.nan)
    # the concave cap is the far intersection for rays starting inside the sphere
    t[ok] = -b[ok] + np.sqrt(disc[ok])
    hit = o + np.nan_to_num(t)[:, None] * d
    lateral = np.hypot(hit[:, 0] - mirror.center[0], hit[:, 1] - mirror.center[1])
    cap = ok & (t > 0) & (lateral <= mirror.aperture_radius) & (hit[:, 2] <= 1e-12)
    if np.any(cap):
        normal = (hit[cap] - c) / mirror.roc
        o[cap] = hit[cap]
        d[cap] = reflect_specular(d[cap], normal)
        w[cap] *= reflectivity
        tags[cap] = MIRROR
    flat = down & ~cap
    if np.any(flat):
        tp = -o[flat, 2] / d[flat, 2]
        o[flat] = o[flat] + tp[:, None] * d[flat]
        d[flat, 2] = -d[flat, 2]
        w[flat] *= planar_reflectivity
        tags[flat] = PLANAR
    d /= np.linalg.norm(d, axis=1)[:, None]
    return RayBundle(o, d, w, tags, bundle.emitted)
