"""Electrostatic model of a layered planar trap with an optional recessed mirror.

Planar electrodes use the exact gapless-plane solid-angle solution.  A mirror
depression is treated as a perturbation: the panel solver finds surface
charges on the cap and a surrounding annulus of the plane such that the sum of
the planar solution (continued below the plane) and the panel potential meets
the conductor boundary values on the cap, while leaving the flat plane
unchanged.

Units: positions in micrometres, potentials in volts, gradients in V/um.
Public ``e_field`` results are in V/m.
"""
import numpy as np

from ..kernels import charge_eval, polygon_eval
from ..layout import TrapLayout
from .panels import CAP, PanelSolver, mirror_mesh

# trap (x, y, z) -> plane-local (a, b, h) = (x, z, y)
_PERM = [0, 2, 1]


class BoundaryPointError(ValueError):
    """Evaluation point lies on or below the electrode plane."""


def _as_points(pts):
    pts = np.asarray(pts, dtype=float)
    single = pts.ndim == 1
    return np.atleast_2d(pts), single


class TrapModel:
    """Basis potentials of every electrode in a layout.

    Each electrode's basis function is the potential with that electrode at
    1 V and all others grounded.  The mirror perturbation is factorised once
    on construction (``mesh_rings`` sets the cap resolution); per-electrode
    panel charges are solved lazily on first use.  An existing ``panel``
    solver may be passed in when the mirror is unchanged.
    """

    def __init__(self, layout: TrapLayout, mesh_rings=10, mesh_outer=None, panel=None):
        self.layout = layout
        self.labels = layout.labels
        self._finite = [e for e in layout.electrodes if not e.is_complement]
        self._complement = next((e.label for e in layout.electrodes if e.is_complement), None)
        self.panel = None
        self._charges = {}
        self._src = None
        if layout.mirror is not None:
            if panel is None:
                mesh = mirror_mesh(layout.mirror, layout.mirror_center, rings=mesh_rings,
                                   outer_radius=mesh_outer)
                panel = PanelSolver(mesh)
            self.panel = panel
            self._src = panel.mesh.centroids

    def with_layout(self, layout: TrapLayout):
        """Model of a layout sharing this one's mirror, reusing the factorisation."""
        if (layout.mirror != self.layout.mirror
                or layout.mirror_center != self.layout.mirror_center):
            raise ValueError("with_layout requires an identical mirror")
        return TrapModel(layout, panel=self.panel)

    def _charge(self, label):
        if label not in self._charges:
            self._solve_perturbations([label])
        return self._charges[label]

    def prepare(self):
        """Solve every electrode's panel charges at once."""
        if self.panel is not None:
            todo = [lab for lab in self.labels if lab not in self._charges]
            if todo:
                self._solve_perturbations(todo)
        return self

    # -- planar part --------------------------------------------------------

    def _planar(self, electrode, pts, order, signed=False):
        m = len(pts)
        phi = np.zeros(m)
        grad = np.zeros((m, 3)) if order >= 1 else None
        hess = np.zeros((m, 3, 3)) if order >= 2 else None
        local = pts[:, _PERM].copy()
        local[:, 2] -= electrode.layer
        for poly in electrode.polygons:
            p, g, h = polygon_eval(poly, local, order)
            phi += p
            if order >= 1:
                grad += g[:, _PERM]
            if order >= 2:
                hess += h[:, _PERM][:, :, _PERM]
        return phi, grad, hess

    def _continued(self, label, pts):
        """Planar basis analytically continued below the plane inside the mirror."""
        if label == self._complement:
            total = np.ones(len(pts))
            for e in self._finite:
                total -= self._continued(e.label, pts)
            return total
        phi, _, _ = self._planar(self.layout.electrode(label), pts, 0)
        if label == self.layout.mirror_electrode:
            phi = phi + 2.0
        return phi

    def _solve_perturbations(self, labels):
        mesh = self.panel.mesh
        cap = mesh.tags == CAP
        rhs = np.zeros((len(mesh), len(labels)))
        for j, label in enumerate(labels):
            target = 1.0 if label == self.layout.mirror_electrode else 0.0
            rhs[cap, j] = target - self._continued(label, mesh.centroids[cap])
        dens = self.panel.solve(rhs)
        q = self.panel.charges(dens)
        for j, label in enumerate(labels):
            self._charges[label] = q[:, j]

    def replace_electrode(self, electrode):
        """Swap one electrode's geometry in place, re-solving only its perturbation."""
        idx = self.labels.index(electrode.label)
        self.layout.electrodes[idx] = electrode
        self._finite = [e for e in self.layout.electrodes if not e.is_complement]
        self._charges.pop(electrode.label, None)
        self._charges.pop(self._complement, None)

    # -- public evaluation --------------------------------------------------

    def basis(self, label, pts, order=0):
        """Potential (and gradient / Hessian, per um) of one electrode at 1 V."""
        pts, single = _as_points(pts)
        if np.any(pts[:, 1] <= 0):
            raise BoundaryPointError("evaluation points must lie above the electrode plane")
        if label == self._complement:
            out = self._complement_basis(pts, order)
        else:
            out = self._planar(self.layout.electrode(label), pts, order)
            if self.panel is not None:
                out = _add(out, self._pert(self._charge(label), pts, order))
        if single:
            return tuple(None if o is None else o[0] for o in out)
        return out

    def _complement_basis(self, pts, order):
        m = len(pts)
        phi = np.ones(m)
        grad = np.zeros((m, 3)) if order >= 1 else None
        hess = np.zeros((m, 3, 3)) if order >= 2 else None
        out = (phi, grad, hess)
        for e in self._finite:
            p, g, h = self._planar(e, pts, order)
            out = _add(out, (-p, None if g is None else -g, None if h is None else -h))
        if self.panel is not None:
            out = _add(out, self._pert(self._charge(self._complement), pts, order))
        return out

    def _pert(self, charges, pts, order):
        return charge_eval(self._src, charges, pts, order)

    def voltage_vector(self, voltages):
        if isinstance(voltages, dict):
            unknown = set(voltages) - set(self.labels)
            if unknown:
                raise KeyError(f"unknown electrodes {sorted(unknown)}")
            return np.array([float(voltages.get(lab, 0.0)) for lab in self.labels])
        v = np.asarray(voltages, dtype=float)
        if v.shape != (len(self.labels),):
            raise ValueError(
                f"voltage vector has shape {v.shape}, expected ({len(self.labels)},)")
        return v

    def combined(self, voltages, pts, order=0):
        """Superposed potential in V with gradient (V/um) and Hessian (V/um^2)."""
        v = self.voltage_vector(voltages)
        pts, single = _as_points(pts)
        if np.any(pts[:, 1] <= 0):
            raise BoundaryPointError("evaluation points must lie above the electrode plane")
        m = len(pts)
        phi = np.zeros(m)
        grad = np.zeros((m, 3)) if order >= 1 else None
        hess = np.zeros((m, 3, 3)) if order >= 2 else None
        out = (phi, grad, hess)
        if self._complement is not None:
            base = v[self.labels.index(self._complement)]
        else:
            base = 0.0
        if base != 0.0:
            out = (out[0] + base, grad, hess)
        charges = None
        for label, vi in zip(self.labels, v):
            if label == self._complement:
                continue
            eff = vi - base
            if eff == 0.0:
                continue
            p, g, h = self._planar(self.layout.electrode(label), pts, order)
            out = _add(out, (eff * p, None if g is None else eff * g,
                             None if h is None else eff * h))
        if self.panel is not None:
            charges = sum(vi * self._charge(lab) for lab, vi in zip(self.labels, v) if vi != 0.0)
            if not np.isscalar(charges):
                out = _add(out, self._pert(charges, pts, order))
        if single:
            return tuple(None if o is None else o[0] for o in out)
        return out

    def potential(self, voltages, pts):
        return self.combined(voltages, pts, 0)[0]

    def e_field(self, voltages, pts):
        """Electric field in V/m."""
        return -1e6 * self.combined(voltages, pts, 1)[1]

    def rf_basis(self, pts, order=1):
        """Sum of the basis functions of all rf electrodes."""
        labels = self.layout.rf_labels
        out = None
        for lab in labels:
            b = self.basis(lab, pts, order)
            out = b if out is None else _add(out, b)
        return out


def _add(a, b):
    return tuple(None if x is None or y is None else x + y for x, y in zip(a, b))
