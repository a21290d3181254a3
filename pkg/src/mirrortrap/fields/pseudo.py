"""Pseudopotential, rf-null location and secular frequencies."""
import math
from dataclasses import dataclass

import numpy as np
from scipy import constants

E_CHARGE = constants.e
AMU = constants.atomic_mass
CA40_MASS = 39.962591 * AMU


class NoMinimumError(RuntimeError):
    pass


class ContinuationError(RuntimeError):
    pass


class SaddlePointError(RuntimeError):
    pass


@dataclass(frozen=True)
class DriveParams:
    """rf drive and ion species.  ``rf_frequency`` is angular (rad/s)."""

    rf_amplitude: float
    rf_frequency: float
    ion_mass: float = CA40_MASS
    ion_charge: float = E_CHARGE

    def __post_init__(self):
        for name in ("rf_amplitude", "rf_frequency", "ion_mass", "ion_charge"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_mhz(cls, rf_amplitude, rf_mhz, ion_mass=CA40_MASS, ion_charge=E_CHARGE):
        return cls(rf_amplitude, 2 * math.pi * rf_mhz * 1e6, ion_mass, ion_charge)

    @property
    def pseudo_coefficient(self):
        """eV per (V/m)^2 in ``q^2 |E|^2 / (4 m Omega^2)``."""
        return self.ion_charge**2 / (4 * self.ion_mass * self.rf_frequency**2) / E_CHARGE

    @property
    def charge_number(self):
        return self.ion_charge / E_CHARGE


REFERENCE_DRIVE = DriveParams.from_mhz(200.0, 62.3)


def pseudopotential(drive: DriveParams, e_rf):
    """Pseudopotential in eV for rf field amplitude(s) ``e_rf`` in V/m."""
    e = np.asarray(e_rf, dtype=float)
    return drive.pseudo_coefficient * np.sum(e * e, axis=-1)


@dataclass
class FieldSample:
    point: np.ndarray
    potential: float
    e_field: np.ndarray
    pseudopotential: float


class EffectivePotential:
    """Pseudopotential plus static dc energy of the ion, both in eV.

    Gradients are per um and Hessians per um^2.
    """

    def __init__(self, model, drive: DriveParams, dc_voltages=None):
        self.model = model
        self.drive = drive
        self.dc = None if dc_voltages is None else model.voltage_vector(dc_voltages)
        # (V0 * 1e6)^2 converts basis derivatives per um to V/m
        self._k = drive.pseudo_coefficient * (drive.rf_amplitude * 1e6) ** 2

    def rf_field(self, pts):
        """rf field amplitude in V/m."""
        _, g, _ = self.model.rf_basis(pts, 1)
        return -self.drive.rf_amplitude * 1e6 * g

    def pseudo(self, pts, order=1):
        _, g, h = self.model.rf_basis(pts, 2 if order >= 1 else 1)
        g = np.atleast_2d(g)
        val = self._k * np.sum(g * g, axis=-1)
        if order < 1:
            return val, None
        h = h.reshape(-1, 3, 3)
        grad = 2 * self._k * np.einsum("mij,mj->mi", h, g)
        return val, grad

    def value_and_grad(self, pts):
        pts = np.atleast_2d(pts)
        val, grad = self.pseudo(pts, 1)
        if self.dc is not None:
            p, g, _ = self.model.combined(self.dc, pts, 1)
            q = self.drive.charge_number
            val = val + q * np.atleast_1d(p)
            grad = grad + q * np.atleast_2d(g)
        return val, grad

    def hessian(self, point, step=1e-3):
        """Central-difference Hessian of the analytic gradient, symmetrised."""
        point = np.asarray(point, float)
        cols = []
        for i in range(3):
            d = np.zeros(3)
            d[i] = step
            _, gp = self.value_and_grad(point + d)
            _, gm = self.value_and_grad(point - d)
            cols.append((gp[0] - gm[0]) / (2 * step))
        h = np.array(cols).T
        return 0.5 * (h + h.T)

    def sample(self, point):
        point = np.asarray(point, float)
        e = self.rf_field(point[None])[0]
        pot = 0.0 if self.dc is None else float(self.model.potential(self.dc, point[None])[0])
        return FieldSample(point, pot, e, float(pseudopotential(self.drive, e)))


def _newton_min(func, x0, dims, tol, max_iter=60, step=1e-4, max_move=5.0):
    """Newton iteration on the gradient of ``func`` over coordinates ``dims``.

    ``func(points)`` returns ``(values, gradients)``.  The Hessian is a central
    difference of the analytic gradient.  Returns ``(x, value, grad_norm)``.
    """
    x = np.array(x0, dtype=float)
    dims = list(dims)
    val, grad = func(x[None])
    val, g = val[0], grad[0, dims]
    for _ in range(max_iter):
        gn = np.linalg.norm(g)
        if gn < tol:
            return x, val, gn
        pts = []
        for i in dims:
            for s in (step, -step):
                p = x.copy()
                p[i] += s
                pts.append(p)
        _, gg = func(np.array(pts))
        gg = gg[:, dims]
        hess = np.array([(gg[2 * k] - gg[2 * k + 1]) / (2 * step) for k in range(len(dims))]).T
        hess = 0.5 * (hess + hess.T)
        w, vecs = np.linalg.eigh(hess)
        if w.min() > 0:
            delta = -np.linalg.solve(hess, g)
        else:
            # fall back to a gradient step along the positive-curvature frame
            wabs = np.maximum(np.abs(w), 1e-12 * max(np.abs(w).max(), 1e-30))
            delta = -vecs @ ((vecs.T @ g) / wabs)
        norm = np.linalg.norm(delta)
        if norm > max_move:
            delta *= max_move / norm
        t = 1.0
        while True:
            trial = x.copy()
            trial[dims] += t * delta
            tv, tg = func(trial[None])
            if tv[0] <= val + 1e-4 * t * float(g @ delta) or t < 1e-6:
                break
            t *= 0.5
        if t < 1e-6 and tv[0] > val:
            # no descent possible at this resolution; accept if already flat
            break
        x, val, g = trial, tv[0], tg[0, dims]
    gn = np.linalg.norm(g)
    if gn < tol:
        return x, val, gn
    raise NoMinimumError(f"no minimum found near {x0} (gradient norm {gn:.3g})")


def find_rf_null(model, drive, z, guess=(0.0, 60.0), tol=1e-9, grid_fallback=True):
    """Transverse minimum of the pseudopotential at fixed axial position ``z``.

    Returns ``(x, y, residual_eV)``.  ``tol`` is the gradient-norm tolerance in
    eV/um.
    """
    eff = EffectivePotential(model, drive)
    x0 = np.array([guess[0], guess[1], z], dtype=float)
    try:
        x, val, _ = _newton_min(eff.value_and_grad, x0, (0, 1), tol)
    except NoMinimumError:
        if not grid_fallback:
            raise
        x0 = _grid_start(eff, x0)
        x, val, _ = _newton_min(eff.value_and_grad, x0, (0, 1), tol)
    return float(x[0]), float(x[1]), float(val)


def _grid_start(eff, x0, half=20.0, n=21):
    xs = x0[0] + np.linspace(-half, half, n)
    ys = np.clip(x0[1] + np.linspace(-half, half, n), 1.0, None)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, x0[2])])
    val, _ = eff.pseudo(pts, 0)
    best = pts[np.argmin(val)]
    return best


@dataclass
class NullContour:
    """rf-null track; ``height`` is measured from the electrode plane."""

    z: np.ndarray
    x: np.ndarray
    y: np.ndarray
    residual: np.ndarray
    e_rf: np.ndarray

    @property
    def height(self):
        return self.y

    def rows(self):
        return np.column_stack([self.z, self.x, self.y, self.height, self.residual])

    def points(self):
        return np.column_stack([self.x, self.y, self.z])


def trace_null_contour(model, drive, z_values, guess=(0.0, 60.0), tol=1e-9,
                       max_jump=None):
    """Follow the rf null along ``z_values`` using warm starts.

    Raises ContinuationError if a point cannot be converged or the null jumps
    by more than ``max_jump`` um between neighbouring samples.
    """
    z_values = np.asarray(z_values, dtype=float)
    eff = EffectivePotential(model, drive)
    out = np.empty((len(z_values), 3))
    prev = np.array(guess, dtype=float)
    for i, z in enumerate(z_values):
        x0 = np.array([prev[0], prev[1], z])
        try:
            x, val, _ = _newton_min(eff.value_and_grad, x0, (0, 1), tol)
        except NoMinimumError as exc:
            raise ContinuationError(f"null lost at z = {z:.3f} um: {exc}") from None
        if max_jump is not None and i > 0 and np.hypot(*(x[:2] - prev)) > max_jump:
            raise ContinuationError(f"null jumped at z = {z:.3f} um")
        out[i] = x[0], x[1], val
        prev = x[:2]
    pts = np.column_stack([out[:, 0], out[:, 1], z_values])
    e = np.linalg.norm(eff.rf_field(pts), axis=1)
    return NullContour(z_values, out[:, 0], out[:, 1], out[:, 2], e)


@dataclass
class SecularResult:
    frequencies: np.ndarray  # angular, rad/s, ascending
    axes: np.ndarray  # columns are mode directions
    hessian: np.ndarray  # eV / um^2
    center: np.ndarray


def secular_from_hessian(hessian_ev_um2, ion_mass, charge_number=1.0):
    """Mode frequencies from an effective-potential Hessian in eV/um^2."""
    h = 0.5 * (np.asarray(hessian_ev_um2) + np.asarray(hessian_ev_um2).T)
    w, v = np.linalg.eigh(h)
    if np.any(w <= 0):
        raise SaddlePointError(f"effective potential has non-positive curvature {w}")
    k = w * E_CHARGE * 1e12  # J / m^2
    return np.sqrt(k / ion_mass), v


def secular_frequencies(model, drive, dc_voltages, well_center, refine=True, step=1e-3):
    """Secular mode frequencies (rad/s) at a minimum of the effective potential."""
    eff = EffectivePotential(model, drive, dc_voltages)
    center = np.asarray(well_center, dtype=float)
    if refine:
        center, _, _ = _newton_min(eff.value_and_grad, center, (0, 1, 2), 1e-9, max_move=2.0)
    h = eff.hessian(center, step)
    freqs, axes = secular_from_hessian(h, drive.ion_mass)
    return SecularResult(freqs, axes, h, center)


def find_well_minimum(model, drive, dc_voltages, guess, tol=1e-9):
    eff = EffectivePotential(model, drive, dc_voltages)
    x, _, _ = _newton_min(eff.value_and_grad, np.asarray(guess, float), (0, 1, 2), tol,
                          max_move=2.0)
    return x
