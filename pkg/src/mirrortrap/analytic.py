"""Closed-form gapless-plane design formulas and collection geometry.

Lengths are in micrometres and angles in radians throughout.
"""
import math
from dataclasses import dataclass, field

import numpy as np


class DomainError(ValueError):
    """Input outside the domain where a closed-form expression is valid."""


@dataclass(frozen=True)
class RingDesign:
    ion_height: float
    rail_angle: float = 0.0

    def __post_init__(self):
        if not self.ion_height > 0:
            raise DomainError(f"ion height must be positive, got {self.ion_height}")
        if not 0.0 <= self.rail_angle <= math.pi / 6:
            raise DomainError(f"ring rail angle must lie in [0, pi/6], got {self.rail_angle}")


@dataclass(frozen=True)
class LinearDesign:
    ion_height: float
    rail_angle: float = 0.0

    def __post_init__(self):
        if not self.ion_height > 0:
            raise DomainError(f"ion height must be positive, got {self.ion_height}")
        if not 0.0 <= self.rail_angle <= math.pi / 4:
            raise DomainError(f"linear rail angle must lie in [0, pi/4], got {self.rail_angle}")


@dataclass(frozen=True)
class CollectionMetrics:
    """Half-angle of the collected cone, its NA and the fraction of 4 pi."""

    half_angle: float
    numerical_aperture: float
    geometric_efficiency: float

    @property
    def half_angle_deg(self):
        return math.degrees(self.half_angle)


@dataclass(frozen=True)
class MirrorSpec:
    """Spherical micromirror recessed into the electrode plane.

    ``vertex`` is the deepest point of the mirror.  The rim lies ``sag`` above
    it; for a mirror cut into a flat electrode the rim is the electrode plane.
    """

    roc: float
    aperture_radius: float
    sag: float = None
    vertex: tuple = field(default=(0.0, 0.0, 0.0))

    def __post_init__(self):
        if self.roc <= 0 or self.aperture_radius < 0:
            raise DomainError("mirror roc must be positive and aperture non-negative")
        if self.aperture_radius > self.roc:
            raise DomainError(
                f"aperture radius {self.aperture_radius} exceeds roc {self.roc}")
        if self.sag is None:
            object.__setattr__(self, "sag", mirror_sag(self.roc, self.aperture_radius))
        object.__setattr__(self, "vertex", tuple(float(v) for v in self.vertex))

    @property
    def focal_length(self):
        """Paraxial focal length, ROC/2."""
        return 0.5 * self.roc

    def paraxial_focus(self, axis=2):
        """Paraxial focus ``roc/2`` above the vertex along coordinate ``axis``."""
        f = list(self.vertex)
        f[axis] += self.focal_length
        return tuple(f)


def ring_rail_inner_radius(d: RingDesign) -> float:
    """Inner radius of a narrow rf ring that puts the rf null at ``ion_height``."""
    if d.rail_angle >= math.pi / 6:
        return 0.0
    bracket = 0.75 / math.sin(math.pi / 6 + d.rail_angle) ** 2 - 1.0
    return d.ion_height * math.sqrt(max(bracket, 0.0))


def linear_rail_radius(d: LinearDesign) -> float:
    """Mirror radius tangent to straight rf rails for a given ion height."""
    return d.ion_height * math.tan(math.pi / 4 - d.rail_angle)


def collection_metrics(r: float, h: float) -> CollectionMetrics:
    if not h > 0:
        raise DomainError(f"height must be positive, got {h}")
    if r < 0:
        raise DomainError(f"radius must be non-negative, got {r}")
    phi = math.atan2(r, h)
    return CollectionMetrics(phi, math.sin(phi), 0.5 * (1.0 - math.cos(phi)))


def cone_efficiency(na: float) -> float:
    """Fraction of 4 pi inside a cone of numerical aperture ``na``."""
    if not 0.0 <= na <= 1.0:
        raise DomainError(f"NA must lie in [0, 1], got {na}")
    return 0.5 * (1.0 - math.sqrt(1.0 - na * na))


def mirror_sag(roc: float, r: float) -> float:
    if r < 0 or r > roc:
        raise DomainError(f"need 0 <= r <= roc, got r={r}, roc={roc}")
    # r^2 / (roc + sqrt(roc^2 - r^2)) avoids cancellation for small r
    return r * r / (roc + math.sqrt(roc * roc - r * r))


def mirror_na(m: MirrorSpec, ion_position, axis=2) -> float:
    """NA subtended by the mirror rim at an on-axis ion.

    ``axis`` selects the coordinate that points away from the mirror (2 for the
    optics frame, 1 for the trap frame where y is height).
    """
    ion = np.asarray(ion_position, dtype=float)
    vertex = np.asarray(m.vertex, dtype=float)
    lateral = np.delete(ion - vertex, axis)
    if np.linalg.norm(lateral) > 1e-9 * max(m.roc, 1.0):
        raise DomainError("ion must sit on the mirror axis")
    rise = ion[axis] - (vertex[axis] + m.sag)
    if rise <= 0:
        raise DomainError("ion must lie above the mirror rim")
    return collection_metrics(m.aperture_radius, rise).numerical_aperture


def rail_angle_for_radius(ratio: float, geometry: str = "ring") -> float:
    """Invert the ring or linear design relation for a target ``r/h``."""
    if ratio < 0:
        raise DomainError("ratio must be non-negative")
    if geometry == "ring":
        if ratio > math.sqrt(2.0):
            raise DomainError("ring design cannot exceed r/h = sqrt(2)")
        return math.asin(math.sqrt(0.75 / (ratio * ratio + 1.0))) - math.pi / 6
    if geometry == "linear":
        if ratio > 1.0:
            raise DomainError("linear design cannot exceed r/h = 1")
        return math.pi / 4 - math.atan(ratio)
    raise ValueError(f"unknown geometry {geometry!r}")
