"""Spline-parametrised perturbations of the inner rf rail edge."""
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from ..layout import LayoutError, RailGeometry, TrapLayout, build_layout


@dataclass(frozen=True)
class EdgeBounds:
    """Box for control points: ``s`` in ``[s_min, s_max]``, offsets within ``max_offset``."""

    s_min: float = 20.0
    s_max: float = 250.0
    max_offset: float = 5.0
    min_spacing: float = 10.0
    max_points: int = 12


class EdgeGenome:
    """Control points ``(s, offset)`` of a symmetric inner-edge perturbation.

    ``s`` is the axial distance from the mirror centre and ``offset`` the
    transverse displacement of the inner edge (um, positive away from the
    trap axis).  The same perturbation is applied at ``+s`` and ``-s``.
    """

    __slots__ = ("points",)

    def __init__(self, points):
        pts = np.array(points, dtype=float).reshape(-1, 2)
        order = np.argsort(pts[:, 0], kind="stable")
        self.points = pts[order]
        self.points.setflags(write=False)

    @classmethod
    def zeros(cls, s_values):
        s = np.asarray(s_values, dtype=float)
        return cls(np.column_stack([s, np.zeros_like(s)]))

    @property
    def count(self):
        return len(self.points)

    @property
    def s(self):
        return self.points[:, 0]

    @property
    def offsets(self):
        return self.points[:, 1]

    def key(self):
        return self.points.tobytes()

    def __eq__(self, other):
        return isinstance(other, EdgeGenome) and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"EdgeGenome({self.points.tolist()})"

    def validate(self, bounds: EdgeBounds):
        if self.count < 1:
            raise ValueError("genome needs at least one control point")
        if self.count > bounds.max_points:
            raise ValueError("too many control points")
        if np.any(self.s <= bounds.s_min - 1e-12) or np.any(self.s >= bounds.s_max + 1e-12):
            raise ValueError("control point outside the axial window")
        if np.any(np.diff(self.s) < bounds.min_spacing - 1e-12):
            raise ValueError("control points closer than the minimum spacing")
        if np.any(np.abs(self.offsets) > bounds.max_offset + 1e-12):
            raise ValueError("control-point offset outside the box")

    def profile(self, bounds: EdgeBounds):
        """Callable ``offset(|z - z_c|)``, zero outside the window with zero slope at its edges."""
        s = np.r_[bounds.s_min, self.s, bounds.s_max]
        d = np.r_[0.0, self.offsets, 0.0]
        spline = CubicSpline(s, d, bc_type="clamped")

        def offset(u):
            u = np.abs(np.asarray(u, dtype=float))
            out = np.zeros_like(u)
            inside = (u > bounds.s_min) & (u < bounds.s_max)
            out[inside] = spline(u[inside])
            return out

        return offset


def _z_end(layout):
    rf = layout.electrode(layout.rf_labels[0])
    return float(max(np.abs(p[:, 1]).max() for p in rf.polygons))


def interpolate_edge(genome: EdgeGenome, base: TrapLayout, bounds: EdgeBounds = None):
    """Layout with the genome's perturbation applied to the inner rf edge.

    The outer edge is rebuilt at the rail's normal width, so the width is
    unchanged.  dc electrodes follow the new outer edge.  Raises LayoutError
    if the perturbed rail self-intersects or enters the mirror aperture.
    """
    bounds = bounds or EdgeBounds()
    if base.rail is None:
        raise LayoutError("base layout has no parametric rail")
    genome.validate(bounds)
    rail = base.rail
    zc = base.mirror_center[1] if base.mirror is not None else rail.dc_center
    inner = rail.inner + genome.profile(bounds)(rail.z - zc)
    new = RailGeometry(rail.z.copy(), inner, rail.width.copy(), rail.x_far,
                       rail.dc_pitch, rail.dc_per_side, rail.dc_center)
    clearance = None
    if base.mirror is not None:
        clearance = (base.mirror.aperture_radius, zc)
    new.validate(clearance)
    meta = dict(base.meta)
    meta["edge_genome"] = genome.points.tolist()
    return build_layout(new, base.mirror, z_end=_z_end(base), meta=meta)


def width_deviation(rail: RailGeometry):
    """Largest deviation of the measured rail width from the nominal one.

    Rays are cast along the inner-edge normal at points a quarter and three
    quarters of the way between samples, so they fall between outer-edge
    vertices, and are intersected with the outer-edge polyline.
    """
    zo, xo = rail.outer_edge()
    spline = CubicSpline(rail.z, rail.inner)
    dz = np.diff(rail.z)
    zq = np.sort(np.r_[rail.z[:-1] + 0.25 * dz, rail.z[:-1] + 0.75 * dz])[2:-2]
    xq = spline(zq)
    wq = np.interp(zq, rail.z, rail.width)
    slope = spline(zq, 1)
    norm = np.hypot(1.0, slope)
    nz, nx = -slope / norm, 1.0 / norm
    sz, sx = zo[:-1], xo[:-1]
    dz, dx = np.diff(zo), np.diff(xo)
    worst = 0.0
    for k in range(len(zq)):
        # solve p + t n = s + u d over all outer segments
        det = -nz[k] * dx + nx[k] * dz
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (-(sz - zq[k]) * dx + (sx - xq[k]) * dz) / det
            u = (nz[k] * (sx - xq[k]) - nx[k] * (sz - zq[k])) / det
        ok = (u >= -1e-9) & (u <= 1 + 1e-9) & (t > 0)
        if not np.any(ok):
            return np.inf
        worst = max(worst, abs(t[ok].min() - wq[k]))
    return worst
