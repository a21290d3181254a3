"""Fluorescence lineshapes, micromotion sidebands and collection-enhancement profiles.

Frequencies are in MHz, positions in micrometres.
"""
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq, curve_fit
from scipy.special import j0, j1

RF_MHZ = 62.3  # trap drive frequency
CA_397_NM = 396.96
PUBLISHED_SIDEBAND_RATIO = (0.06, 0.02)
PUBLISHED_BETA = (0.3, 0.1)
PUBLISHED_ENHANCEMENT = 1.9


class FitError(RuntimeError):
    """The lineshape fit failed to converge."""


@dataclass(frozen=True)
class Lineshape:
    """Carrier Lorentzian plus one rf sideband at ``+sideband_offset``.

    Widths are half widths at half maximum.  ``sideband_width=None`` shares
    the carrier width.
    """

    carrier_center: float
    carrier_width: float
    carrier_amplitude: float
    sideband_amplitude: float = 0.0
    sideband_width: float = None
    sideband_offset: float = RF_MHZ

    def __post_init__(self):
        if self.carrier_amplitude < 0 or self.sideband_amplitude < 0:
            raise ValueError("amplitudes must be non-negative")
        if self.carrier_width <= 0 or (self.sideband_width is not None
                                       and self.sideband_width <= 0):
            raise ValueError("widths must be positive")

    @property
    def shared_width(self):
        return self.sideband_width is None

    @property
    def ratio(self):
        return self.sideband_amplitude / self.carrier_amplitude


def _lorentz(d, w):
    return w * w / (d * d + w * w)


def eval_lineshape(model: Lineshape, detuning):
    d = np.asarray(detuning, dtype=float) - model.carrier_center
    ws = model.carrier_width if model.sideband_width is None else model.sideband_width
    return (model.carrier_amplitude * _lorentz(d, model.carrier_width)
            + model.sideband_amplitude * _lorentz(d - model.sideband_offset, ws))


@dataclass
class LineshapeFit:
    model: Lineshape
    ratio: float
    ratio_err: float
    parameters: dict
    covariance: np.ndarray
    degenerate: bool
    residual_rms: float

    def to_dict(self):
        return {"model": asdict(self.model), "ratio": self.ratio, "ratio_err": self.ratio_err,
                "parameters": self.parameters, "covariance": self.covariance.tolist(),
                "degenerate": self.degenerate, "residual_rms": self.residual_rms}


def fit_lineshape(detuning, counts, sideband_offset=RF_MHZ, shared_width=True, sigma=None,
                  p0=None):
    """Least-squares fit of a carrier plus sideband with the offset held fixed.

    Returns the model and the sideband/carrier ratio with its 1-sigma
    uncertainty from the parameter covariance.  ``degenerate`` flags peaks
    closer than the sum of their half widths.
    """
    x = np.asarray(detuning, dtype=float)
    y = np.asarray(counts, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("detuning and counts must be 1-D arrays of equal length")
    if len(x) < 8:
        raise ValueError("need at least 8 samples")
    if np.ptp(x) < sideband_offset:
        raise ValueError("samples must span both the carrier and the sideband")
    if not np.max(y) > 0:
        raise FitError("counts contain no positive signal")
    scale = float(np.max(np.abs(y)))
    yn = y / scale
    names = ["carrier_center", "carrier_width", "carrier_amplitude", "sideband_amplitude"]
    if not shared_width:
        names.append("sideband_width")
    if p0 is None:
        k = int(np.argmax(yn))
        # the carrier is the taller peak; guess its width from the half-maximum span
        above = x[yn >= 0.5 * yn[k]]
        w = max(0.5 * np.ptp(above), np.min(np.diff(np.sort(x))))
        ks = int(np.argmin(np.abs(x - x[k] - sideband_offset)))
        p0 = [x[k], w, yn[k], max(yn[ks] - yn[k] * _lorentz(sideband_offset, w), 1e-3)]
        if not shared_width:
            p0.append(w)
    else:
        p0 = list(p0)
        p0[2] /= scale
        p0[3] /= scale
    lo = [-np.inf, 0.0, 0.0, 0.0] + ([0.0] if not shared_width else [])
    hi = [np.inf] * len(names)

    def f(d, *p):
        ws = p[4] if not shared_width else None
        return eval_lineshape(Lineshape(p[0], p[1], p[2], p[3], ws, sideband_offset), d)

    sig = None if sigma is None else np.asarray(sigma, dtype=float) / scale
    try:
        popt, pcov = curve_fit(f, x, yn, p0=p0, sigma=sig, absolute_sigma=sigma is not None,
                               bounds=(lo, hi), max_nfev=20000, xtol=1e-15, ftol=1e-15,
                               gtol=1e-15)
    except (RuntimeError, ValueError) as exc:
        raise FitError(str(exc)) from None
    if not np.all(np.isfinite(popt)) or popt[1] <= 0 or popt[2] <= 0:
        raise FitError("fit converged to an invalid carrier")
    # undo the amplitude normalisation
    popt = popt.copy()
    s = np.ones(len(names))
    s[2] = s[3] = scale
    popt *= s
    pcov = pcov * np.outer(s, s)
    ws = popt[4] if not shared_width else None
    model = Lineshape(popt[0], popt[1], popt[2], popt[3], ws, sideband_offset)
    a_c, a_s = popt[2], popt[3]
    ratio = a_s / a_c
    jac = np.zeros(len(names))
    jac[2] = -a_s / a_c**2
    jac[3] = 1.0 / a_c
    var = float(jac @ pcov @ jac) if np.all(np.isfinite(pcov)) else math.inf
    ratio_err = math.sqrt(max(var, 0.0))
    wsum = popt[1] + (popt[4] if not shared_width else popt[1])
    resid = y - eval_lineshape(model, x)
    return LineshapeFit(model, float(ratio), ratio_err, dict(zip(names, map(float, popt))),
                        pcov, bool(sideband_offset < wsum),
                        float(np.sqrt(np.mean(resid**2))))


# -- modulation index --------------------------------------------------------


def bessel_ratio(beta):
    """Sideband/carrier ratio ``J1(beta)^2 / J0(beta)^2``."""
    b = np.asarray(beta, dtype=float)
    return (j1(b) / j0(b)) ** 2


_BETA_MAX = brentq(lambda b: bessel_ratio(b) - 1.0, 0.5, 2.0, xtol=1e-15)


def modulation_index(ratio):
    """Invert ``R = J1(beta)^2 / J0(beta)^2`` for ``0 <= R < 1``."""
    r = float(ratio)
    if not 0.0 <= r < 1.0:
        raise ValueError(f"sideband ratio must lie in [0, 1), got {r}")
    if r == 0.0:
        return 0.0
    return brentq(lambda b: bessel_ratio(b) - r, 0.0, _BETA_MAX, xtol=1e-15, rtol=1e-15)


def modulation_report(ratio, ratio_err=0.0):
    """Modulation index with its propagated error next to the published value."""
    beta = modulation_index(ratio)
    err = 0.0
    if ratio_err > 0:
        lo = modulation_index(max(ratio - ratio_err, 0.0))
        hi = modulation_index(min(ratio + ratio_err, 1.0 - 1e-12))
        err = 0.5 * (hi - lo)
    return {"ratio": float(ratio), "ratio_err": float(ratio_err), "beta": beta,
            "beta_err": err, "beta_small_angle": 2.0 * math.sqrt(ratio),
            "published_beta": PUBLISHED_BETA[0], "published_beta_err": PUBLISHED_BETA[1],
            "note": ("beta from the Bessel-ratio inversion J1^2/J0^2 = R (beta_small_angle "
                     "is its leading-order form 2 sqrt(R)); the published "
                     f"value {PUBLISHED_BETA[0]} +- {PUBLISHED_BETA[1]} for R = "
                     f"{PUBLISHED_SIDEBAND_RATIO[0]} is not reproduced by this formula")}


def micromotion_projection(displacement, beam_direction):
    """Component of the rf-driven displacement amplitude along the beam."""
    d = np.asarray(displacement, dtype=float)
    k = np.asarray(beam_direction, dtype=float)
    norm = np.linalg.norm(k)
    if norm == 0:
        raise ValueError("beam direction must be non-zero")
    return float(d @ (k / norm))


def beam_direction(angle_to_axis=math.pi / 4):
    """Unit beam vector in the trap frame, parallel to the surface, at an angle to ``z``."""
    return np.array([math.sin(angle_to_axis), 0.0, math.cos(angle_to_axis)])


def micromotion_displacement(e_rf, drive):
    """Micromotion amplitude (um) driven by an rf field amplitude ``e_rf`` (V/m)."""
    e = np.asarray(e_rf, dtype=float)
    return drive.ion_charge * e / (drive.ion_mass * drive.rf_frequency**2) * 1e6


def beta_from_field(e_rf, drive, beam=None, wavelength_nm=CA_397_NM):
    """Modulation index ``k . x`` for the micromotion driven by ``e_rf``."""
    beam = beam_direction() if beam is None else beam
    amp = micromotion_projection(micromotion_displacement(e_rf, drive), beam)
    return abs(2 * math.pi / (wavelength_nm * 1e-3) * amp)


# -- collection enhancement --------------------------------------------------


@dataclass
class EnhancementProfile:
    z: np.ndarray
    relative: np.ndarray
    correction: np.ndarray
    baseline: float
    peak: float
    peak_z: float
    meta: dict = field(default_factory=dict)

    def to_rows(self):
        return np.column_stack([self.z, self.relative, self.correction])


def _correction(curve, z):
    if curve is None:
        return np.ones_like(z)
    if callable(curve):
        c = np.asarray(curve(z), dtype=float)
    else:
        zc, fc = (np.asarray(a, dtype=float) for a in curve)
        order = np.argsort(zc)
        c = np.interp(z, zc[order], fc[order])
    if np.any(c <= 0):
        raise ValueError("aperture correction must be positive")
    return c


def enhancement_profile(z, counts, reference=None, aperture_correction=None,
                        baseline_distance=None):
    """Aperture-corrected counts relative to the far-from-mirror baseline.

    ``reference`` is a ``(z, counts)`` scan far from the mirror; without it
    the baseline is the mean of samples with ``|z| >= baseline_distance``.
    ``aperture_correction`` is the PMT response versus ``z`` (a callable or
    ``(z, factor)`` arrays); counts are divided by it.  The peak is refined
    by a parabola through the largest sample and its neighbours.
    """
    z = np.asarray(z, dtype=float)
    c = np.asarray(counts, dtype=float)
    if z.shape != c.shape or z.ndim != 1 or len(z) < 3:
        raise ValueError("z and counts must be 1-D arrays of equal length >= 3")
    order = np.argsort(z)
    z, c = z[order], c[order]
    corr = _correction(aperture_correction, z)
    corrected = c / corr
    if reference is not None:
        zr, cr = (np.asarray(a, dtype=float) for a in reference)
        base = float(np.mean(cr / _correction(aperture_correction, zr)))
    elif baseline_distance is not None:
        far = np.abs(z) >= baseline_distance
        if not np.any(far):
            raise ValueError("no samples in the baseline region")
        base = float(np.mean(corrected[far]))
    else:
        raise ValueError("need a reference scan or a baseline distance")
    if base <= 0:
        raise ValueError("baseline must be positive")
    rel = corrected / base
    k = int(np.argmax(rel))
    peak, peak_z = float(rel[k]), float(z[k])
    if 0 < k < len(z) - 1:
        x3, y3 = z[k - 1:k + 2], rel[k - 1:k + 2]
        a, b, cc = np.polyfit(x3 - z[k], y3, 2)
        if a < 0:
            dz = -b / (2 * a)
            if abs(dz) <= max(z[k + 1] - z[k], z[k] - z[k - 1]):
                peak_z = float(z[k] + dz)
                peak = float(cc - b * b / (4 * a))
    return EnhancementProfile(z, rel, corr, base, peak, peak_z,
                              {"published_peak": PUBLISHED_ENHANCEMENT})
