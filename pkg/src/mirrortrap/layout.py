"""Trap layouts: labelled planar electrode polygons plus an optional mirror.

Coordinates follow the trap convention used throughout the package: ``x`` is
radial (in the electrode plane), ``y`` is height above the electrode plane and
``z`` is the trap axis.  Electrode polygons are therefore given as in-plane
``(x, z)`` vertex loops in micrometres.
"""
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .analytic import MirrorSpec

LENGTH_UNIT = "um"
RF_LABEL = "rf"


class LayoutError(ValueError):
    pass


@dataclass
class Electrode:
    """One electrode; several polygons with the same label are wired together.

    ``polygons`` is None for the complement electrode, which covers every part
    of the plane not claimed by a finite polygon.
    """

    label: str
    polygons: list = None
    layer: float = 0.0

    @property
    def is_complement(self):
        return self.polygons is None

    @property
    def is_rf(self):
        return self.label == RF_LABEL or self.label.startswith(RF_LABEL + ":")


@dataclass
class RailGeometry:
    """Parametric +x rf rail; the -x rail is its mirror image.

    The inner edge is sampled as ``x = inner(z)`` on a strictly increasing
    ``z`` grid, and the outer edge lies at normal distance ``width(z)``.
    """

    z: np.ndarray
    inner: np.ndarray
    width: np.ndarray
    x_far: float = 1000.0
    dc_pitch: float = 1750.0 / 21
    dc_per_side: int = 21
    dc_center: float = 0.0

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        self.inner = np.asarray(self.inner, dtype=float)
        self.width = np.asarray(self.width, dtype=float)

    def outer_edge(self, subdivide=2):
        """Outer edge ``(z, x)`` points at normal distance ``width``.

        The edge is evaluated ``subdivide`` times per inner-edge interval so
        that its chords stay as short as the inner ones where it curves.
        """
        spline = CubicSpline(self.z, self.inner)
        t = np.arange(len(self.z) - 1)[:, None] + np.arange(subdivide)[None, :] / subdivide
        t = np.r_[t.ravel(), len(self.z) - 1]
        z = np.interp(t, np.arange(len(self.z)), self.z)
        slope = spline(z, 1)
        norm = np.hypot(1.0, slope)
        w = np.interp(z, self.z, self.width)
        return z - w * slope / norm, spline(z) + w / norm

    def validate(self, clearance=None):
        if np.any(np.diff(self.z) <= 0):
            raise LayoutError("rail z grid must be strictly increasing")
        if np.any(self.inner <= 0) or np.any(self.width <= 0):
            raise LayoutError("rail inner edge and width must stay positive")
        zo, xo = self.outer_edge()
        if np.any(np.diff(zo) <= 0):
            raise LayoutError("rail outer edge folds over itself (self-intersection)")
        if clearance is not None:
            radius, center_z = clearance
            near = np.abs(self.z - center_z) < radius
            if np.any(np.hypot(self.inner[near], self.z[near] - center_z) < radius):
                raise LayoutError("rf rail crosses into the mirror aperture")
        if np.any(xo >= self.x_far):
            raise LayoutError("rail outer edge reaches the dc outer boundary")

    def to_dict(self):
        return {
            "z": self.z.tolist(),
            "inner": self.inner.tolist(),
            "width": self.width.tolist(),
            "x_far": self.x_far,
            "dc_pitch": self.dc_pitch,
            "dc_per_side": self.dc_per_side,
            "dc_center": self.dc_center,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class TrapLayout:
    electrodes: list
    mirror: MirrorSpec = None
    mirror_electrode: str = None
    loading_slot: np.ndarray = None
    rail: RailGeometry = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        labels = [e.label for e in self.electrodes]
        if len(set(labels)) != len(labels):
            raise LayoutError(f"duplicate electrode labels in {labels}")
        if sum(e.is_complement for e in self.electrodes) > 1:
            raise LayoutError("at most one complement electrode is allowed")
        if self.mirror is not None:
            if self.mirror_electrode not in labels:
                raise LayoutError("mirror must be embedded in a named electrode")
            host = self.electrode(self.mirror_electrode)
            if host.is_complement or host.is_rf:
                raise LayoutError("mirror host must be a finite dc electrode")
            self._check_mirror_clear()

    @property
    def labels(self):
        return [e.label for e in self.electrodes]

    @property
    def rf_labels(self):
        return [e.label for e in self.electrodes if e.is_rf]

    @property
    def dc_labels(self):
        return [e.label for e in self.electrodes if not e.is_rf]

    def electrode(self, label):
        for e in self.electrodes:
            if e.label == label:
                return e
        raise KeyError(label)

    def index(self, label):
        return self.labels.index(label)

    @property
    def mirror_center(self):
        """In-plane ``(x, z)`` centre of the mirror aperture."""
        if self.mirror is None:
            return None
        return (self.mirror.vertex[0], self.mirror.vertex[2])

    def mirror_focus(self):
        """Paraxial focus of the mirror in trap coordinates."""
        return np.array(self.mirror.paraxial_focus(axis=1))

    def _check_mirror_clear(self):
        # No polygon edge may pass through the aperture.
        cx, cz = self.mirror_center
        r = self.mirror.aperture_radius
        host = self.electrode(self.mirror_electrode)
        inside_host = any(_point_in_polygon(poly, (cx, cz)) for poly in host.polygons)
        if not inside_host:
            raise LayoutError("mirror centre is not inside its host electrode")
        for e in self.electrodes:
            if e.is_complement:
                continue
            for poly in e.polygons:
                if _segment_distance(poly, (cx, cz)).min() < r:
                    raise LayoutError(
                        f"electrode edge of {e.label!r} crosses the mirror aperture")

    def translated(self, dz):
        """Copy of the layout rigidly shifted by ``dz`` along the trap axis."""
        shift = np.array([0.0, dz])
        electrodes = [
            Electrode(e.label, None if e.is_complement else [p + shift for p in e.polygons],
                      e.layer)
            for e in self.electrodes
        ]
        mirror = None
        if self.mirror is not None:
            vx, vy, vz = self.mirror.vertex
            mirror = replace(self.mirror, vertex=(vx, vy, vz + dz))
        rail = None
        if self.rail is not None:
            rail = replace(self.rail, z=self.rail.z + dz,
                           dc_center=self.rail.dc_center + dz)
        slot = None if self.loading_slot is None else self.loading_slot + shift
        return TrapLayout(electrodes, mirror, self.mirror_electrode, slot, rail,
                          dict(self.meta))

    def to_dict(self):
        out = {
            "units": {"length": LENGTH_UNIT},
            "electrodes": [],
            "mirror": None,
            "loading_slot": None,
        }
        for e in self.electrodes:
            if e.is_complement:
                out["electrodes"].append(
                    {"label": e.label, "layer": e.layer, "vertices": None})
                continue
            for poly in e.polygons:
                out["electrodes"].append(
                    {"label": e.label, "layer": e.layer,
                     "vertices": np.round(poly, 9).tolist()})
        if self.mirror is not None:
            cx, cz = self.mirror_center
            out["mirror"] = {
                "roc": self.mirror.roc,
                "aperture_radius": self.mirror.aperture_radius,
                "sag": self.mirror.sag,
                "center": [cx, cz],
                "electrode": self.mirror_electrode,
            }
        if self.loading_slot is not None:
            out["loading_slot"] = np.asarray(self.loading_slot).tolist()
        if self.rail is not None:
            out["rail"] = self.rail.to_dict()
        if self.meta:
            out["meta"] = self.meta
        return out

    @classmethod
    def from_dict(cls, d, source="<dict>"):
        units = d.get("units", {})
        if not isinstance(units, dict):
            raise LayoutError(f"{source}: 'units' must be an object")
        if units.get("length") != LENGTH_UNIT:
            raise LayoutError(
                f"{source}: units.length must be {LENGTH_UNIT!r}, got {units.get('length')!r}")
        if "electrodes" not in d or not isinstance(d["electrodes"], list):
            raise LayoutError(f"{source}: missing 'electrodes' list")
        grouped = {}
        for i, entry in enumerate(d["electrodes"]):
            where = f"{source}: electrodes[{i}]"
            if "label" not in entry:
                raise LayoutError(f"{where}: missing 'label'")
            label = str(entry["label"])
            layer = float(entry.get("layer", 0.0))
            verts = entry.get("vertices")
            if verts is None:
                if label in grouped:
                    raise LayoutError(f"{where}: complement electrode {label!r} repeated")
                grouped[label] = Electrode(label, None, layer)
                continue
            poly = np.asarray(verts, dtype=float)
            if poly.ndim != 2 or poly.shape[1] != 2 or len(poly) < 3:
                raise LayoutError(f"{where}.vertices: need at least 3 [x, z] pairs")
            if label in grouped:
                e = grouped[label]
                if e.is_complement or e.layer != layer:
                    raise LayoutError(f"{where}: inconsistent repeat of {label!r}")
                e.polygons.append(poly)
            else:
                grouped[label] = Electrode(label, [poly], layer)
        mirror = None
        host = None
        m = d.get("mirror")
        if m:
            try:
                cx, cz = m["center"]
                roc = float(m["roc"])
                ap = float(m["aperture_radius"])
                sag = float(m.get("sag", MirrorSpec(roc, ap).sag))
                host = m["electrode"]
            except (KeyError, TypeError, ValueError) as exc:
                raise LayoutError(f"{source}: malformed mirror block ({exc})") from None
            mirror = MirrorSpec(roc, ap, sag, (float(cx), -sag, float(cz)))
        slot = d.get("loading_slot")
        rail = RailGeometry.from_dict(d["rail"]) if d.get("rail") else None
        return cls(list(grouped.values()), mirror, host,
                   None if slot is None else np.asarray(slot, float), rail,
                   d.get("meta", {}))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path):
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise LayoutError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(d, source=str(path))


def _point_in_polygon(poly, pt):
    x, z = pt
    px, pz = poly[:, 0], poly[:, 1]
    qx, qz = np.roll(px, -1), np.roll(pz, -1)
    crosses = (pz > z) != (qz > z)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = px + (z - pz) * (qx - px) / (qz - pz)
    return bool(np.count_nonzero(crosses & (x < xint)) % 2)


def _segment_distance(poly, pt):
    p = np.asarray(pt, float)
    a = poly
    b = np.roll(poly, -1, axis=0)
    ab = b - a
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / np.einsum("ij,ij->i", ab, ab), 0, 1)
    closest = a + t[:, None] * ab
    return np.linalg.norm(closest - p, axis=1)


# -- layout construction ----------------------------------------------------

def build_layout(rail: RailGeometry, mirror: MirrorSpec = None, z_end=2000.0,
                 meta=None):
    """Tile the plane with rf rails, a central dc electrode and dc segments.

    The rail extends to ``|z| = z_end``.  The central electrode between the
    rails hosts the mirror; dc control electrodes sit outside each rail in
    ``dc_per_side`` segments of ``dc_pitch``; everything else is ``gnd``.
    """
    rail.validate()
    zo, xo = rail.outer_edge()
    # straight continuation of both edges to the rail ends
    zi, xi = _extend(rail.z, rail.inner, z_end)
    zo, xo = _extend(zo, xo, z_end)

    rf_pos = _drop_collinear(np.concatenate([np.column_stack([xi, zi]),
                                             np.column_stack([xo, zo])[::-1]]))
    rf_neg = rf_pos * np.array([-1.0, 1.0])
    rf_neg = rf_neg[::-1]
    center = _drop_collinear(np.concatenate([np.column_stack([xi, zi])[::-1],
                                             np.column_stack([-xi, zi])]))

    electrodes = [Electrode(RF_LABEL, [rf_pos, rf_neg]),
                  Electrode("center", [center])]
    n = rail.dc_per_side
    edges = rail.dc_center + rail.dc_pitch * (np.arange(n + 1) - n / 2)
    if edges[0] <= -z_end or edges[-1] >= z_end:
        raise LayoutError("dc segments extend beyond the rail")
    for side, sgn in (("a", 1.0), ("b", -1.0)):
        for k in range(n):
            z0, z1 = edges[k], edges[k + 1]
            sel = (zo > z0) & (zo < z1)
            xs0 = np.interp(z0, zo, xo)
            xs1 = np.interp(z1, zo, xo)
            inner = np.concatenate([[[xs0, z0]], np.column_stack([xo[sel], zo[sel]]),
                                    [[xs1, z1]]])
            poly = _drop_collinear(
                np.concatenate([inner, [[rail.x_far, z1], [rail.x_far, z0]]]))
            if sgn < 0:
                poly = (poly * np.array([-1.0, 1.0]))[::-1]
            electrodes.append(Electrode(f"dc{side}{k + 1:02d}", [poly]))
    electrodes.append(Electrode("gnd", None))
    return TrapLayout(electrodes, mirror, "center" if mirror is not None else None,
                      rail=rail, meta=dict(meta or {}))


def _drop_collinear(poly, tol=1e-9):
    """Remove vertices lying on the straight line through their neighbours."""
    poly = np.asarray(poly, dtype=float)
    keep = np.ones(len(poly), dtype=bool)
    prev = np.roll(poly, 1, axis=0)
    nxt = np.roll(poly, -1, axis=0)
    a, b = poly - prev, nxt - poly
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    scale = np.hypot(*a.T) * np.hypot(*b.T)
    keep &= ~((np.abs(cross) <= tol * scale) & (np.sum(a * b, axis=1) > 0))
    keep &= scale > 0
    return poly[keep]


def _extend(z, x, z_end):
    z = np.asarray(z, float)
    x = np.asarray(x, float)
    keep = (z > -z_end) & (z < z_end)
    return (np.concatenate([[-z_end], z[keep], [z_end]]),
            np.concatenate([[x[0]], x[keep], [x[-1]]]))


@dataclass(frozen=True)
class WrapParams:
    """Knobs of the wrapped-rail design around a mirror at the origin.

    The inner rail edge follows a circle of ``wrap_radius`` for
    ``wrap_angle`` either side of the transverse axis, then a cubic blend of
    axial length ``transition`` carries it to ``linear_half_gap``.  The rail
    width follows the same blend from ``wrap_width`` to ``linear_width``.
    Defaults were tuned so the rf null over the ideal mirror sits at its
    focus and the linear-section height is flat beyond 300 um.
    """

    wrap_radius: float = 68.68
    wrap_angle: float = np.pi / 4
    linear_half_gap: float = 54.83
    transition: float = 60.0
    wrap_width: float = 17.0
    linear_width: float = 19.87
    dense_step: float = 1.0
    dense_extent: float = 400.0
    z_end: float = 5000.0


def wrapped_rail(p: WrapParams) -> RailGeometry:
    """Rail that follows a circle around the mirror then pinches to a linear section."""
    zw = p.wrap_radius * np.sin(p.wrap_angle)
    xw = p.wrap_radius * np.cos(p.wrap_angle)
    zt = zw + p.transition
    if zt >= p.dense_extent:
        raise LayoutError("transition extends beyond the densely sampled region")
    n = int(round(p.dense_extent / p.dense_step))
    z = np.linspace(-p.dense_extent, p.dense_extent, 2 * n + 1)
    az = np.abs(z)
    x = np.full_like(z, p.linear_half_gap)
    circ = az <= zw
    x[circ] = np.sqrt(p.wrap_radius**2 - z[circ] ** 2)
    blend = (az > zw) & (az < zt)
    spline = CubicHermiteSpline([zw, zt], [xw, p.linear_half_gap], [-zw / xw, 0.0])
    x[blend] = spline(az[blend])
    s = np.clip((az - zw) / p.transition, 0.0, 1.0)
    width = p.wrap_width + (p.linear_width - p.wrap_width) * s * s * (3 - 2 * s)
    return RailGeometry(z, x, width)


def example_layout(params: WrapParams = None, mirror: MirrorSpec = None):
    """Wrapped-rail trap with the ideal 150 um ROC / 60 um aperture mirror."""
    params = params or WrapParams()
    if mirror is None:
        m0 = MirrorSpec(150.0, 60.0)
        mirror = MirrorSpec(m0.roc, m0.aperture_radius, m0.sag, (0.0, -m0.sag, 0.0))
    rail = wrapped_rail(params)
    return build_layout(rail, mirror, z_end=params.z_end,
                        meta={"design": "wrapped", **_params_meta(params)})


def _params_meta(p):
    return {k: float(v) for k, v in p.__dict__.items()}


def linear_layout(half_gap=30.0, width=110.0, z_extent=320.0, mirror=None):
    """Plain five-wire linear section (no wrap); optional mirror at the origin."""
    z = np.linspace(-z_extent, z_extent, 5)
    rail = RailGeometry(z, np.full(5, half_gap), np.full(5, width))
    return build_layout(rail, mirror, meta={"design": "linear"})


def load_example():
    """The shipped, null-aligned example layout."""
    return TrapLayout.load(Path(__file__).parent / "data" / "example_layout.json")
