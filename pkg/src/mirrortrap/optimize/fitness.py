"""GA fitness: axial variation of the rf field along the null, plus null-focus check."""
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from ..fields.model import TrapModel
from ..fields.pseudo import ContinuationError, NoMinimumError, find_rf_null, trace_null_contour

FOCUS_TOLERANCE = 0.25  # um
WIDTH_TOLERANCE = 0.01  # um


@dataclass
class FitnessReport:
    """``fitness`` is the integral of ``(dE^2/dz)^2`` in (V/m)^4/um."""

    fitness: float
    constraint_violations: list = field(default_factory=list)
    null_focus_distance: float = np.inf
    contour: object = None

    @property
    def feasible(self):
        return not self.constraint_violations


def rf_energy_gradient_integral(z, e_rf):
    """Trapezoid integral of ``(d|E|^2/dz)^2`` over contour samples."""
    z = np.asarray(z, dtype=float)
    e2 = np.asarray(e_rf, dtype=float) ** 2
    if len(z) < 3:
        raise ValueError("need at least three contour samples")
    d = np.gradient(e2, z, edge_order=2)
    return float(trapezoid(d * d, z))


class RailFitness:
    """Evaluates candidate layouts that share one mirror.

    The mirror factorisation of ``base_model`` is reused for every
    candidate.  The contour is traced from the mirror centre over
    ``[0, extent]`` um (the designs are symmetric in ``z``) every ``step`` um.
    """

    def __init__(self, base_model: TrapModel, drive, extent=300.0, step=1.0,
                 tolerance=FOCUS_TOLERANCE, guess=None):
        self.base = base_model
        self.drive = drive
        self.extent = float(extent)
        self.step = float(step)
        self.tolerance = tolerance
        lay = base_model.layout
        self.z0 = lay.mirror_center[1] if lay.mirror is not None else 0.0
        self.focus = lay.mirror_focus() if lay.mirror is not None else None
        if guess is None:
            guess = (0.0, self.focus[1]) if self.focus is not None else (0.0, 60.0)
        self.guess = guess

    def model_for(self, layout):
        if layout is self.base.layout:
            return self.base
        if self.base.panel is None:
            return TrapModel(layout)
        return self.base.with_layout(layout)

    def z_samples(self, step=None):
        step = self.step if step is None else step
        n = int(round(self.extent / step))
        return self.z0 + np.linspace(0.0, self.extent, n + 1)

    def __call__(self, layout, step=None):
        model = self.model_for(layout)
        violations = []
        dist = np.inf
        try:
            x, y, _ = find_rf_null(model, self.drive, self.z0, self.guess)
        except NoMinimumError as exc:
            return FitnessReport(np.inf, [f"no null over the mirror: {exc}"])
        if self.focus is not None:
            dist = float(np.hypot(x - self.focus[0], y - self.focus[1]))
            if dist > self.tolerance:
                violations.append(f"null {dist:.3f} um from focus (limit {self.tolerance})")
        try:
            contour = trace_null_contour(model, self.drive, self.z_samples(step), (x, y))
        except ContinuationError as exc:
            return FitnessReport(np.inf, violations + [f"contour trace failed: {exc}"], dist)
        value = rf_energy_gradient_integral(contour.z, contour.e_rf)
        return FitnessReport(value, violations, dist, contour)
