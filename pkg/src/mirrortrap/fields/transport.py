"""dc control voltages for axial wells and transport waveforms along the null."""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import lsq_linear

from .pseudo import E_CHARGE, EffectivePotential, _newton_min, trace_null_contour

DEFAULT_BOUND = 6.0
DEFAULT_AXIAL = 2 * math.pi * 1.0e6


class InfeasibleBoundError(RuntimeError):
    """The requested well cannot be reached with voltages inside the bound."""


@dataclass
class ControlSolution:
    voltages: np.ndarray  # one entry per model label, volts
    controls: list
    z0: float
    target_frequency: float  # rad/s
    achieved_frequency: float  # rad/s, from the axial curvature at the centre
    fit_rms: float  # volts


@dataclass
class Waveform:
    """Sequence of dc voltage vectors applied at ``update_rate`` (Hz)."""

    steps: np.ndarray  # (n_steps, n_labels)
    update_rate: float
    labels: list
    positions: np.ndarray  # commanded well position per step, um
    bound: float = DEFAULT_BOUND
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.steps = np.atleast_2d(np.asarray(self.steps, dtype=float))
        if self.update_rate <= 0:
            raise ValueError("update_rate must be positive")
        if np.any(np.abs(self.steps) > self.bound + 1e-9):
            raise InfeasibleBoundError("waveform exceeds its voltage bound")

    @property
    def n_steps(self):
        return len(self.steps)

    @property
    def duration(self):
        return self.n_steps / self.update_rate

    def max_step_change(self):
        if self.n_steps < 2:
            return 0.0
        return float(np.abs(np.diff(self.steps, axis=0)).max())


def control_labels(model):
    """dc electrodes free to be driven: excludes rf, the mirror host and the complement."""
    lay = model.layout
    skip = {lay.mirror_electrode, model._complement}
    return [lab for lab in lay.dc_labels if lab not in skip]


class NullGuide:
    """Smooth interpolation of a traced rf-null contour and the pseudopotential on it."""

    def __init__(self, model, drive, contour):
        self.model = model
        self.drive = drive
        self.contour = contour
        self._x = CubicSpline(contour.z, contour.x)
        self._y = CubicSpline(contour.z, contour.y)
        self.eff = EffectivePotential(model, drive)

    @classmethod
    def trace(cls, model, drive, z_lo, z_hi, step=5.0, guess=(0.0, 60.0)):
        n = max(int(math.ceil((z_hi - z_lo) / step)), 3)
        z = np.linspace(z_lo, z_hi, n + 1)
        return cls(model, drive, trace_null_contour(model, drive, z, guess))

    @property
    def z_range(self):
        return float(self.contour.z[0]), float(self.contour.z[-1])

    def points(self, z):
        z = np.atleast_1d(np.asarray(z, dtype=float))
        lo, hi = self.z_range
        if np.any(z < lo - 1e-9) or np.any(z > hi + 1e-9):
            raise ValueError(f"z outside traced null range [{lo}, {hi}]")
        return np.column_stack([self._x(z), self._y(z), z])


def solve_control_voltages(model, drive, z0, axial_frequency=DEFAULT_AXIAL,
                           bound=DEFAULT_BOUND, guide=None, half_span=30.0, n_points=13,
                           ridge=1e-4, controls=None):
    """Bounded least-squares dc voltages for a harmonic axial well at ``z0``.

    The dc potential on a stencil along the null is fitted to
    ``kappa s^2 / 2`` minus the pseudopotential variation, so the total axial
    curvature matches ``axial_frequency`` (rad/s).  Extra rows pin the dc field
    at the well centre: zero transverse force and an axial force cancelling
    the pseudopotential slope.  A free offset voltage is solved for and then
    dropped.  Raises InfeasibleBoundError if the bounded fit misses the target
    frequency by more than 5%.
    """
    if bound <= 0:
        raise ValueError("bound must be positive")
    if guide is None:
        guide = NullGuide.trace(model, drive, z0 - half_span - 10, z0 + half_span + 10)
    controls = control_labels(model) if controls is None else list(controls)
    q = drive.charge_number
    s = np.linspace(-half_span, half_span, n_points)
    pts = guide.points(z0 + s)
    center = guide.points([z0])
    ps, _ = guide.eff.pseudo(pts, 0)
    _, pg = guide.eff.pseudo(center, 1)
    kappa = drive.ion_mass * axial_frequency**2 / (q * E_CHARGE) * 1e-12  # V/um^2

    ph = guide.eff.hessian(center[0])
    cols_phi = []
    cols_loc = []
    for lab in controls:
        p, _, _ = model.basis(lab, pts, 0)
        _, g, h = model.basis(lab, center, 2)
        cols_phi.append(p)
        cols_loc.append(np.r_[g[0], h[0][2, 2]])
    a_phi = np.array(cols_phi).T
    a_loc = np.array(cols_loc).T  # grad x, y, z and d2/dz2 at the centre
    target = 0.5 * kappa * s**2 - (ps - ps[n_points // 2]) / q
    # local rows (force and axial curvature at the centre) dominate the fit
    w_loc = 10.0 * np.array([half_span, half_span, half_span, half_span**2])
    t_loc = np.r_[-pg[0] / q, kappa - ph[2, 2] / q]
    n = len(controls)
    m = n_points + 4
    a = np.zeros((m + n, n + 1))
    b = np.zeros(m + n)
    a[:n_points, :n] = a_phi
    a[:n_points, n] = 1.0
    b[:n_points] = target
    a[n_points:m, :n] = w_loc[:, None] * a_loc
    b[n_points:m] = w_loc * t_loc
    a[m:, :n] = math.sqrt(ridge) * kappa * half_span**2 * np.eye(n)
    lo = np.r_[np.full(n, -bound), -np.inf]
    hi = np.r_[np.full(n, bound), np.inf]
    res = lsq_linear(a, b, bounds=(lo, hi), method="bvls")
    v = res.x[:n]

    full = np.zeros(len(model.labels))
    for lab, val in zip(controls, v):
        full[model.labels.index(lab)] = val
    curv = float(a_loc[3] @ v) + ph[2, 2] / q
    achieved = math.sqrt(max(curv, 0.0) * q * E_CHARGE * 1e12 / drive.ion_mass)
    rms = float(np.sqrt(np.mean((a_phi @ v + res.x[n] - target) ** 2)))
    if abs(achieved - axial_frequency) > 0.05 * axial_frequency:
        raise InfeasibleBoundError(
            f"axial frequency {achieved / 2 / math.pi / 1e6:.3f} MHz reached within "
            f"+-{bound} V, target {axial_frequency / 2 / math.pi / 1e6:.3f} MHz")
    return ControlSolution(full, controls, float(z0), float(axial_frequency), achieved, rms)


def transport_waveform(model, drive, z_start, z_end, n_steps=1000, update_rate=500e3,
                       axial_frequency=DEFAULT_AXIAL, bound=DEFAULT_BOUND, guide=None,
                       **kwargs):
    """Waveform moving the well from ``z_start`` to ``z_end`` in ``n_steps`` updates.

    Well positions follow a smooth (cosine) ramp so that the first and last
    steps change slowly.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    span = kwargs.get("half_span", 30.0)
    if guide is None:
        lo, hi = min(z_start, z_end), max(z_start, z_end)
        guide = NullGuide.trace(model, drive, lo - span - 10, hi + span + 10)
    t = np.linspace(0.0, 1.0, n_steps)
    pos = z_start + (z_end - z_start) * 0.5 * (1 - np.cos(np.pi * t))
    steps = np.empty((n_steps, len(model.labels)))
    cache = {}
    for i, z in enumerate(pos):
        key = round(float(z), 12)
        if key not in cache:
            cache[key] = solve_control_voltages(model, drive, z, axial_frequency, bound,
                                                guide=guide, **kwargs).voltages
        steps[i] = cache[key]
    return Waveform(steps, update_rate, list(model.labels), pos, bound,
                    {"axial_frequency": axial_frequency, "z_start": z_start,
                     "z_end": z_end})


def well_position(model, drive, voltages, guess, tol=1e-9):
    """Re-minimise the full 3-D effective potential from ``guess``."""
    eff = EffectivePotential(model, drive, voltages)
    x, _, _ = _newton_min(eff.value_and_grad, np.asarray(guess, dtype=float), (0, 1, 2),
                          tol, max_move=2.0)
    return x


def track_waveform(model, drive, waveform, guide=None, tol=1e-9):
    """Minimum position for every step, warm-started from the previous step."""
    out = np.empty((waveform.n_steps, 3))
    prev = None
    for i, (v, z) in enumerate(zip(waveform.steps, waveform.positions)):
        if prev is None:
            prev = guide.points([z])[0] if guide is not None else np.array([0.0, 60.0, z])
        out[i] = well_position(model, drive, v, prev, tol)
        prev = out[i]
    return out
