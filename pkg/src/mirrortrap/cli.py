"""Command-line entry point: ``mirrortrap <command> [options]``.

Every command writes plot-ready CSV (units in the column names) and a JSON
manifest into ``--out-dir``.  Dimensioned options need an explicit unit
suffix, e.g. ``--h 63um`` or ``--theta 4deg``.  Exit status is 0 on
success, 1 on a numerical failure and 2 on a usage or configuration error.
"""
import argparse
import csv
import hashlib
import io
import json
import math
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__

FIGURES = ("3a", "3b", "5a", "5b", "6a", "6b", "9a-model")


class UsageError(Exception):
    """Bad flag value or configuration; exit status 2."""


class NumericalError(Exception):
    """Wrapped numerical failure; exit status 1."""


# -- units -------------------------------------------------------------------

_UNITS = {
    "length_um": {"um": 1.0, "μm": 1.0},
    "length_mm": {"mm": 1.0},
    "angle": {"deg": math.pi / 180, "rad": 1.0},
    "frequency_mhz": {"MHz": 1.0},
    "rate_hz": {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6},
    "voltage": {"V": 1.0},
}
_QTY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([^\d\s.+-].*)?$")


def parse_quantity(text, kind):
    """Number with a mandatory unit suffix, converted to the canonical unit of ``kind``."""
    m = _QTY.match(text)
    if not m:
        raise UsageError(f"cannot parse quantity {text!r}")
    value, unit = float(m.group(1)), (m.group(2) or "").strip()
    allowed = _UNITS[kind]
    if not unit:
        raise UsageError(f"{text!r} needs a unit suffix ({', '.join(allowed)})")
    if unit not in allowed:
        raise UsageError(f"unit {unit!r} in {text!r} not accepted here; use "
                         f"{', '.join(allowed)}")
    return value * allowed[unit]


def _qty(kind):
    def conv(text):
        try:
            return parse_quantity(text, kind)
        except UsageError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    conv.__name__ = kind
    return conv


def _qty_list(kind):
    conv = _qty(kind)

    def parse(text):
        return [conv(t) for t in text.split(",") if t.strip()]
    parse.__name__ = kind + " list"
    return parse


# -- output ------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


class Run:
    """Collects outputs of one command and writes its manifest."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.out = Path(args.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs = []
        self.configs = {}
        self.t0 = time.perf_counter()

    def config(self, path):
        p = Path(path)
        if not p.is_file():
            raise UsageError(f"missing file {path}")
        self.configs[str(p)] = hashlib.sha256(p.read_bytes()).hexdigest()
        return p

    def write_csv(self, name, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        return self._write(name, buf.getvalue())

    def write_json(self, name, obj):
        return self._write(name, json.dumps(obj, indent=2, sort_keys=True, default=_json) + "\n")

    def _write(self, name, text):
        path = self.out / name
        path.write_text(text)
        self.outputs.append({"path": name,
                             "sha256": hashlib.sha256(text.encode()).hexdigest()})
        return path

    def finish(self):
        manifest = {"command": self.args.command, "argv": self.argv,
                    "config_sha256": self.configs, "seed": self.args.seed,
                    "threads": self.args.threads, "version": __version__,
                    "wall_time_s": time.perf_counter() - self.t0, "outputs": self.outputs}
        path = self.out / f"{self.args.command}_manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return manifest


def _json(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _read_two_columns(path, names):
    """Two numeric columns from a CSV with a header row naming ``names``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise UsageError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header[:2] != list(names):
        raise UsageError(f"{path}: header must be {','.join(names)}, got {','.join(header)}")
    data = []
    for k, r in enumerate(rows[1:], start=2):
        if not r:
            continue
        try:
            data.append((float(r[0]), float(r[1])))
        except (ValueError, IndexError):
            raise UsageError(f"{path}: line {k}: expected two numbers") from None
    if not data:
        raise UsageError(f"{path}: no data rows")
    a = np.array(data)
    return a[:, 0], a[:, 1]


# -- shared model setup ------------------------------------------------------


def _layout(run, args):
    from .layout import LayoutError, TrapLayout, load_example
    if args.layout is None:
        return load_example()
    path = run.config(args.layout)
    try:
        return TrapLayout.load(path)
    except (LayoutError, KeyError, ValueError) as exc:
        raise UsageError(f"{path}: {exc}") from None


def _drive(args):
    from .fields.pseudo import DriveParams
    return DriveParams.from_mhz(args.rf_amplitude, args.rf_frequency)


def _model(run, args):
    from .fields.model import TrapModel
    return TrapModel(_layout(run, args))


def _prescription(run, args):
    from .optics.design import load_relay
    from .optics.system import OpticalPrescription
    if args.prescription is None:
        return load_relay()
    path = run.config(args.prescription)
    try:
        return OpticalPrescription.load(path)
    except (KeyError, ValueError, TypeError) as exc:
        raise UsageError(f"{path}: {exc}") from None


def _null_guess(layout):
    if layout.mirror is not None:
        f = layout.mirror_focus()
        return (0.0, float(f[1]))
    return (0.0, 60.0)


# -- commands ----------------------------------------------------------------


def cmd_analytic(run, args):
    from . import analytic as an
    if args.ring or args.linear:
        if args.h is None:
            raise UsageError("--h is required with --ring/--linear")
        theta = args.theta or 0.0
        if args.ring:
            r = an.ring_rail_inner_radius(an.RingDesign(args.h, theta))
        else:
            r = an.linear_rail_radius(an.LinearDesign(args.h, theta))
        m = an.collection_metrics(r, args.h)
        design = "ring" if args.ring else "linear"
    else:
        if args.roc is None or args.r is None:
            raise UsageError("--mirror needs --roc and --r")
        spec = an.MirrorSpec(args.roc, args.r)
        if args.h is None:
            ion = spec.paraxial_focus()
        else:
            # ion height measured from the rim plane
            ion = (0.0, 0.0, spec.sag + args.h)
        r = args.r
        m = an.collection_metrics(r, ion[2] - spec.sag)
        design = "mirror"
    row = (design, r, math.degrees(m.half_angle), m.numerical_aperture, m.geometric_efficiency)
    run.write_csv("analytic.csv", ["design", "r_um", "phi_deg", "NA", "eta"], [row])
    print(f"r = {r:.4f} um, phi = {row[2]:.3f} deg, NA = {row[3]:.4f}, eta = {row[4]:.4f}")


def _axis_points(args, layout):
    n = args.n
    if n < 2:
        raise UsageError("--n must be at least 2")
    s = np.linspace(args.start, args.stop, n)
    base = {"x": args.at_x, "y": args.at_y, "z": args.at_z}
    if base["y"] is None:
        base["y"] = _null_guess(layout)[1]
    if base["z"] is None:
        base["z"] = layout.mirror_center[1] if layout.mirror is not None else 0.0
    pts = np.column_stack([np.full(n, base[c]) for c in "xyz"])
    pts[:, "xyz".index(args.axis)] = s
    return pts


def cmd_solve_field(run, args):
    from .fields.pseudo import EffectivePotential
    model = _model(run, args)
    drive = _drive(args)
    pts = _axis_points(args, model.layout)
    eff = EffectivePotential(model, drive)
    e = eff.rf_field(pts)
    psi, _ = eff.pseudo(pts, 0)
    phi = drive.rf_amplitude * model.rf_basis(pts, 0)[0]
    rows = np.column_stack([pts, phi, e, np.linalg.norm(e, axis=1), psi])
    run.write_csv("field.csv", ["x_um", "y_um", "z_um", "phi_rf_V", "ex_rf_V_per_m",
                                "ey_rf_V_per_m", "ez_rf_V_per_m", "e_rf_V_per_m",
                                "pseudo_eV"], rows)


def _trace(model, drive, start, stop, step):
    from .fields.pseudo import find_rf_null, trace_null_contour
    lay = model.layout
    z0 = lay.mirror_center[1] if lay.mirror is not None else 0.5 * (start + stop)
    x, y, _ = find_rf_null(model, drive, min(max(z0, start), stop), _null_guess(lay))
    # trace outwards from the anchor so each half starts from a converged null
    n_lo = max(int(round((z0 - start) / step)), 0)
    n_hi = max(int(round((stop - z0) / step)), 0)
    lo = trace_null_contour(model, drive, z0 - step * np.arange(n_lo + 1), (x, y))
    hi = trace_null_contour(model, drive, z0 + step * np.arange(n_hi + 1), (x, y))
    rows = np.vstack([lo.rows()[::-1][:-1], hi.rows()])
    e = np.r_[lo.e_rf[::-1][:-1], hi.e_rf]
    return rows, e


def cmd_trace_null(run, args):
    model = _model(run, args)
    drive = _drive(args)
    rows, e = _trace(model, drive, args.start, args.stop, args.step)
    run.write_csv("null_contour.csv", ["z_um", "x_um", "y_um", "height_um", "pseudo_eV",
                                       "e_rf_V_per_m"], np.column_stack([rows, e]))


def cmd_secular(run, args):
    from .fields.pseudo import secular_frequencies
    from .fields.transport import NullGuide, solve_control_voltages
    model = _model(run, args)
    drive = _drive(args)
    guide = NullGuide.trace(model, drive, args.z - 45.0, args.z + 45.0,
                            guess=_null_guess(model.layout))
    sol = solve_control_voltages(model, drive, args.z, 2 * math.pi * args.axial * 1e6,
                                 args.bound, guide=guide)
    sec = secular_frequencies(model, drive, sol.voltages, guide.points([args.z])[0])
    rows = [(k, f / 2 / math.pi / 1e6, *sec.axes[:, k]) for k, f in enumerate(sec.frequencies)]
    run.write_csv("secular.csv", ["mode", "frequency_MHz", "axis_x", "axis_y", "axis_z"], rows)
    run.write_csv("voltages.csv", ["electrode", "voltage_V"],
                  list(zip(model.labels, sol.voltages)))
    run.write_json("secular.json", {"center_um": sec.center, "frequencies_MHz":
                                    sec.frequencies / 2 / math.pi / 1e6,
                                    "fit_rms_V": sol.fit_rms})


def cmd_waveform(run, args):
    from .fields.transport import NullGuide, track_waveform, transport_waveform
    model = _model(run, args)
    drive = _drive(args)
    lo, hi = min(args.start, args.stop), max(args.start, args.stop)
    guide = NullGuide.trace(model, drive, lo - 45.0, hi + 45.0, guess=_null_guess(model.layout))
    wf = transport_waveform(model, drive, args.start, args.stop, args.steps, args.rate,
                            2 * math.pi * args.axial * 1e6, args.bound, guide=guide)
    header = ["step", "time_us", "z_cmd_um"] + [f"{lab}_V" for lab in wf.labels]
    t = np.arange(wf.n_steps) / wf.update_rate * 1e6
    rows = [(i, t[i], wf.positions[i], *wf.steps[i]) for i in range(wf.n_steps)]
    run.write_csv("waveform.csv", header, rows)
    summary = {"n_steps": wf.n_steps, "update_rate_Hz": wf.update_rate,
               "duration_s": wf.duration, "max_abs_V": float(np.abs(wf.steps).max()),
               "bound_V": wf.bound}
    if args.track:
        pos = track_waveform(model, drive, wf, guide)
        err = pos[:, 2] - wf.positions
        run.write_csv("tracking.csv", ["step", "z_cmd_um", "x_um", "y_um", "z_um", "error_um"],
                      [(i, wf.positions[i], *pos[i], err[i]) for i in range(wf.n_steps)])
        summary["max_tracking_error_um"] = float(np.abs(err).max())
    run.write_json("waveform.json", summary)


def cmd_optimize_rails(run, args):
    from .optimize.edges import EdgeBounds
    from .optimize.fitness import RailFitness
    from .optimize.ga import GAConfig, run_ga, select_final
    model = _model(run, args)
    drive = _drive(args)
    if model.layout.rail is None:
        raise UsageError("layout has no parametric rail to optimise")
    cfg = GAConfig(population=args.population, generations=args.generations, seed=args.seed,
                   mutation_scale=args.mutation_scale)
    fitness = RailFitness(model, drive, extent=args.extent, step=args.fitness_step)
    result = run_ga(model, drive, cfg, EdgeBounds(), fitness, threads=args.threads)
    final = select_final(result.candidates)
    run.write_csv("ga_history.csv", ["generation", "best_fitness", "median_fitness"],
                  result.history)
    run.write_csv("ga_candidates.csv", ["rank", "fitness", "null_focus_um", "genome"],
                  [(k, c.fitness, c.info.null_focus_distance, json.dumps(c.genome.points.tolist()))
                   for k, c in enumerate(result.candidates)])
    run.write_json("ga_result.json", {"config": cfg.to_dict(), "evaluations": result.evaluations,
                                      "selected_genome": final.genome.points,
                                      "selected_fitness": final.fitness})


def cmd_trace_optics(run, args):
    from .analytic import MirrorSpec
    from .optics.analysis import ion_at_focus
    from .optics.rays import TAG_NAMES, Micromirror, reflect_mirror, sample_emission
    from .optics.system import HIT, trace
    rx = _prescription(run, args)
    m = Micromirror.from_spec(MirrorSpec(args.roc, args.r)).shifted(args.field_height, 0.0)
    bundle = reflect_mirror(sample_emission(ion_at_focus(m), args.rays, args.seed), m,
                            args.reflectivity, args.reflectivity)
    res = trace(rx, bundle)
    ok = (res.status == HIT) & (bundle.weights > 0)
    rows = [(res.x[i], res.y[i], bundle.weights[i], TAG_NAMES[int(bundle.tags[i])])
            for i in np.nonzero(ok)[0]]
    run.write_csv("hits.csv", ["x_mm", "y_mm", "weight", "provenance"], rows)


def _spot_rows(reps):
    return [(r.field_height, r.spot_radius, r.rms_radius, r.enclosed_fraction, r.crosstalk,
             r.enclosed, r.vignetted) for r in reps]


_SPOT_HEADER = ["field_height_mm", "spot_radius_mm", "rms_radius_mm", "enclosed_fraction",
                "crosstalk", "enclosed_of_emitted", "vignetted_of_emitted"]


def cmd_scan_field(run, args):
    from .analytic import MirrorSpec
    from .optics.analysis import REFLECTIVITY, spot_vs_field_height
    rx = _prescription(run, args)
    reps = spot_vs_field_height(rx, MirrorSpec(args.roc, args.r), args.heights, args.rays,
                                args.seed, args.reflectivity, planar_reflectivity=REFLECTIVITY)
    run.write_csv("scan_field.csv", _SPOT_HEADER, _spot_rows(reps))


def cmd_scan_misalign(run, args):
    from .analytic import MirrorSpec
    from .optics.analysis import misalignment_scan
    rx = _prescription(run, args)
    rows = misalignment_scan(rx, MirrorSpec(args.roc, args.r), args.axial, args.vertical,
                             args.heights, args.rays, args.seed, args.reflectivity)
    run.write_csv("scan_misalign.csv",
                  ["direction", "offset_um", "field_height_mm", "spot_radius_mm",
                   "rms_radius_mm", "enclosed_fraction"],
                  [(d, off, r.field_height, r.spot_radius, r.rms_radius, r.enclosed_fraction)
                   for d, off, r in rows])


def cmd_efficiency(run, args):
    from .analytic import MirrorSpec
    from .optics.analysis import PMT_QE, collection_efficiency
    rows = []
    surfaces = [("mirror", MirrorSpec(args.roc, args.r)), ("planar", None)]
    for name, mirror in surfaces:
        res = collection_efficiency(mirror, args.na, args.reflectivity, args.rays, args.seed,
                                    ion_height=args.h)
        rows.append((name, args.na, args.reflectivity, res.efficiency, res.stderr,
                     res.oracle, res.detected(PMT_QE)))
    rows.append(("enhancement", args.na, args.reflectivity, rows[0][3] / rows[1][3],
                 math.nan, rows[0][5] / rows[1][5], math.nan))
    run.write_csv("efficiency.csv", ["surface", "relay_NA", "reflectivity", "efficiency",
                                     "stderr", "oracle", "detected_with_pmt_qe"], rows)
    for r in rows:
        print(f"{r[0]:12s} {r[3]:.4f}")


def cmd_fit_lineshape(run, args):
    from .photometry import fit_lineshape, modulation_report
    x, y = _read_two_columns(run.config(args.input), ("detuning_MHz", "counts"))
    fit = fit_lineshape(x, y, args.sideband_offset, shared_width=not args.separate_widths)
    report = fit.to_dict()
    report["modulation"] = modulation_report(fit.ratio, fit.ratio_err)
    report["small_beta_estimate"] = 2 * math.sqrt(fit.ratio)
    run.write_json("lineshape.json", report)
    mod = report["modulation"]
    print(f"ratio = {fit.ratio:.4f} +- {fit.ratio_err:.4f}, beta = {mod['beta']:.3f} "
          f"(published {mod['published_beta']} +- {mod['published_beta_err']})")


def cmd_enhancement(run, args):
    from .photometry import enhancement_profile
    z, c = _read_two_columns(run.config(args.input), ("z_um", "counts"))
    ref = None
    if args.reference:
        ref = _read_two_columns(run.config(args.reference), ("z_um", "counts"))
    corr = None
    if args.correction:
        corr = _read_two_columns(run.config(args.correction), ("z_um", "factor"))
    if ref is None and args.baseline_distance is None:
        raise UsageError("give --reference or --baseline-distance")
    prof = enhancement_profile(z, c, ref, corr, args.baseline_distance)
    run.write_csv("enhancement.csv", ["z_um", "relative_intensity", "aperture_correction"],
                  prof.to_rows())
    run.write_json("enhancement.json", {"peak": prof.peak, "peak_z_um": prof.peak_z,
                                        "baseline_counts": prof.baseline, **prof.meta})


def cmd_reproduce(run, args):
    fig = args.figure
    if fig not in FIGURES:
        raise UsageError(f"unknown figure {fig!r}; valid ids: {', '.join(FIGURES)}")
    if fig in ("3a", "3b"):
        model = _model(run, args)
        drive = _drive(args)
        rows, e = _trace(model, drive, -1000.0, 1000.0, 5.0)
        if fig == "3a":
            run.write_csv("figure_3a.csv", ["z_um", "residual_pseudo_eV"], rows[:, [0, 4]])
        else:
            run.write_csv("figure_3b.csv", ["z_um", "height_um"], rows[:, [0, 3]])
        return
    if fig == "9a-model":
        from .photometry import RF_MHZ, Lineshape, eval_lineshape
        m = Lineshape(0.0, 11.0, 1.0, 0.06)
        d = np.linspace(-150.0, 150.0, 301)
        run.write_csv("figure_9a_model.csv", ["detuning_MHz", "rate"],
                      np.column_stack([d, eval_lineshape(m, d)]))
        run.write_json("figure_9a_model.json", {"carrier_width_MHz": 11.0, "ratio": 0.06,
                                                "sideband_offset_MHz": RF_MHZ})
        return
    from .analytic import MirrorSpec
    from .optics.analysis import REFLECTIVITY, misalignment_scan, spot_vs_field_height
    rx = _prescription(run, args)
    mirror = MirrorSpec(150.0, 60.0)
    if fig in ("5a", "5b"):
        heights = np.arange(0.0, 16.5, 1.0)
        reps = spot_vs_field_height(rx, mirror, heights, args.rays, args.seed,
                                    planar_reflectivity=REFLECTIVITY)
        if fig == "5a":
            run.write_csv("figure_5a.csv", ["field_height_mm", "spot_radius_mm",
                                            "rms_radius_mm"],
                          [(r.field_height, r.spot_radius, r.rms_radius) for r in reps])
        else:
            run.write_csv("figure_5b.csv", ["field_height_mm", "crosstalk"],
                          [(r.field_height, r.crosstalk) for r in reps])
        return
    offsets = np.arange(-10.0, 10.5, 1.0)
    if fig == "6a":
        rows = misalignment_scan(rx, mirror, offsets, (), (0.0, 8.0), args.rays, args.seed)
    else:
        rows = misalignment_scan(rx, mirror, (), offsets, (0.0,), args.rays, args.seed)
    run.write_csv(f"figure_{fig}.csv", ["offset_um", "field_height_mm", "spot_radius_mm",
                                         "enclosed_fraction"],
                  [(off, r.field_height, r.spot_radius, r.enclosed_fraction)
                   for _, off, r in rows])


# -- parser ------------------------------------------------------------------


def _add_field_opts(p):
    p.add_argument("--layout", help="layout JSON (default: shipped example)")
    p.add_argument("--rf-amplitude", type=_qty("voltage"), default=200.0, metavar="V")
    p.add_argument("--rf-frequency", type=_qty("frequency_mhz"), default=62.3, metavar="MHz")


def _add_optics_opts(p):
    p.add_argument("--prescription", help="relay prescription JSON (default: shipped relay)")
    p.add_argument("--roc", type=_qty("length_um"), default=150.0)
    p.add_argument("--r", type=_qty("length_um"), default=60.0)
    p.add_argument("--reflectivity", type=float, default=0.85)
    p.add_argument("--rays", type=int, default=200_000)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out-dir", default=".")
    ap = argparse.ArgumentParser(prog="mirrortrap", description=__doc__.splitlines()[0],
                                 parents=[common])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analytic", parents=[common], help="closed-form design relations")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--ring", action="store_true")
    g.add_argument("--linear", action="store_true")
    g.add_argument("--mirror", action="store_true")
    p.add_argument("--h", type=_qty("length_um"), help="ion height above the plane")
    p.add_argument("--theta", type=_qty("angle"))
    p.add_argument("--roc", type=_qty("length_um"))
    p.add_argument("--r", type=_qty("length_um"))

    p = sub.add_parser("solve-field", parents=[common], help="rf field and pseudopotential on a line")
    _add_field_opts(p)
    p.add_argument("--axis", choices="xyz", default="z")
    p.add_argument("--start", type=_qty("length_um"), default=-100.0)
    p.add_argument("--stop", type=_qty("length_um"), default=100.0)
    p.add_argument("--n", type=int, default=201)
    p.add_argument("--at-x", type=_qty("length_um"), default=0.0)
    p.add_argument("--at-y", type=_qty("length_um"))
    p.add_argument("--at-z", type=_qty("length_um"))

    p = sub.add_parser("trace-null", parents=[common], help="rf-null contour along the axis")
    _add_field_opts(p)
    p.add_argument("--start", type=_qty("length_um"), default=-1000.0)
    p.add_argument("--stop", type=_qty("length_um"), default=1000.0)
    p.add_argument("--step", type=_qty("length_um"), default=5.0)

    for name, helptext in (("secular", "well voltages and secular frequencies"),
                           ("waveform", "transport waveform along the null")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        _add_field_opts(p)
        p.add_argument("--axial", type=_qty("frequency_mhz"), default=1.0)
        p.add_argument("--bound", type=_qty("voltage"), default=6.0)
        if name == "secular":
            p.add_argument("--z", type=_qty("length_um"), default=0.0)
        else:
            p.add_argument("--start", type=_qty("length_um"), default=-50.0)
            p.add_argument("--stop", type=_qty("length_um"), default=0.0)
            p.add_argument("--steps", type=int, default=1000)
            p.add_argument("--rate", type=_qty("rate_hz"), default=500e3)
            p.add_argument("--track", action="store_true")

    p = sub.add_parser("optimize-rails", parents=[common], help="genetic optimisation of the rf edge")
    _add_field_opts(p)
    p.add_argument("--population", type=int, default=32)
    p.add_argument("--generations", type=int, default=100)
    p.add_argument("--mutation-scale", type=_qty("length_um"), default=0.5)
    p.add_argument("--extent", type=_qty("length_um"), default=300.0)
    p.add_argument("--fitness-step", type=_qty("length_um"), default=1.0)

    p = sub.add_parser("trace-optics", parents=[common], help="image-plane ray hits")
    _add_optics_opts(p)
    p.add_argument("--field-height", type=_qty("length_mm"), default=0.0)

    p = sub.add_parser("scan-field", parents=[common], help="spot and cross-talk vs field height")
    _add_optics_opts(p)
    p.add_argument("--heights", type=_qty_list("length_mm"),
                   default=[float(h) for h in range(17)])

    p = sub.add_parser("scan-misalign", parents=[common], help="spot vs ion misalignment")
    _add_optics_opts(p)
    p.add_argument("--axial", type=_qty_list("length_um"), default=[-4.0, 0.0, 4.0])
    p.add_argument("--vertical", type=_qty_list("length_um"), default=[-3.0, 0.0, 3.0])
    p.add_argument("--heights", type=_qty_list("length_mm"), default=[0.0, 8.0])

    p = sub.add_parser("efficiency", parents=[common], help="collection efficiency estimate")
    p.add_argument("--na", type=float, default=0.14)
    p.add_argument("--reflectivity", type=float, default=0.85)
    p.add_argument("--rays", type=int, default=1_000_000)
    p.add_argument("--roc", type=_qty("length_um"), default=150.0)
    p.add_argument("--r", type=_qty("length_um"), default=60.0)
    p.add_argument("--h", type=_qty("length_um"),
                   help="ion height above the plane (default: mirror focus)")

    p = sub.add_parser("fit-lineshape", parents=[common], help="carrier + sideband fit")
    p.add_argument("input", help="CSV with columns detuning_MHz,counts")
    p.add_argument("--sideband-offset", type=_qty("frequency_mhz"), default=62.3)
    p.add_argument("--separate-widths", action="store_true")

    p = sub.add_parser("enhancement", parents=[common], help="relative collection profile")
    p.add_argument("input", help="CSV with columns z_um,counts")
    p.add_argument("--reference", help="CSV z_um,counts far from the mirror")
    p.add_argument("--correction", help="CSV z_um,factor of the PMT aperture response")
    p.add_argument("--baseline-distance", type=_qty("length_um"))

    p = sub.add_parser("reproduce", parents=[common], help="figure data sets")
    p.add_argument("figure", help=f"one of {', '.join(FIGURES)}")
    _add_field_opts(p)
    _add_optics_opts(p)
    return ap


COMMANDS = {
    "analytic": cmd_analytic, "solve-field": cmd_solve_field, "trace-null": cmd_trace_null,
    "secular": cmd_secular, "waveform": cmd_waveform, "optimize-rails": cmd_optimize_rails,
    "trace-optics": cmd_trace_optics, "scan-field": cmd_scan_field,
    "scan-misalign": cmd_scan_misalign, "efficiency": cmd_efficiency,
    "fit-lineshape": cmd_fit_lineshape, "enhancement": cmd_enhancement,
    "reproduce": cmd_reproduce,
}


def _numerical_errors():
    from .analytic import DomainError
    from .fields.model import BoundaryPointError
    from .fields.panels import SingularSystemError
    from .fields.pseudo import ContinuationError, NoMinimumError, SaddlePointError
    from .fields.transport import InfeasibleBoundError
    from .optics.design import DesignError
    from .optimize.ga import NoFeasibleCandidateError
    from .photometry import FitError
    return (ContinuationError, NoMinimumError, SaddlePointError, InfeasibleBoundError,
            SingularSystemError, NoFeasibleCandidateError, FitError, DesignError,
            BoundaryPointError, DomainError, np.linalg.LinAlgError, FloatingPointError)


_NEGATIVE = re.compile(r"^-(?:\d|\.\d)")


def _join_negative(argv):
    """Attach negative quantities such as ``-100um`` to the preceding flag."""
    out = []
    for tok in argv:
        if out and _NEGATIVE.match(tok) and out[-1].startswith("--") and "=" not in out[-1]:
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(_join_negative(argv))  # exits with status 2 on usage errors
    numerical = _numerical_errors()
    try:
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        run = Run(args, argv)
        COMMANDS[args.command](run, args)
        run.finish()
    except UsageError as exc:
        print(f"mirrortrap {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except numerical as exc:
        print(f"mirrortrap {args.command}: numerical failure: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
