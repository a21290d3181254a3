import math

import numpy as np
import pytest

from mirrortrap.fields.pseudo import secular_frequencies
from mirrortrap.fields.transport import (
    InfeasibleBoundError, NullGuide, Waveform, control_labels, solve_control_voltages,
    track_waveform, transport_waveform)


@pytest.fixture(scope="module")
def guide(example_model, drive):
    return NullGuide.trace(example_model, drive, -120.0, 60.0, 5.0, (0.0, 62.0))


def test_control_labels_exclude_rf_host_and_ground(example_model):
    labels = control_labels(example_model)
    assert "rf" not in labels and "center" not in labels and "gnd" not in labels
    assert len(labels) == 42


def test_well_reaches_target_frequency(example_model, drive, guide):
    sol = solve_control_voltages(example_model, drive, 0.0, guide=guide)
    assert np.all(np.abs(sol.voltages) <= 6.0 + 1e-9)
    assert sol.achieved_frequency == pytest.approx(2 * math.pi * 1e6, rel=0.05)
    center = guide.points([0.0])[0]
    sec = secular_frequencies(example_model, drive, sol.voltages, center)
    assert abs(sec.center[2]) < 0.5
    axial = np.argmax(np.abs(sec.axes[2]))
    assert sec.frequencies[axial] / (2 * math.pi) == pytest.approx(1e6, rel=0.1)
    radial = np.delete(sec.frequencies, axial) / (2 * math.pi)
    assert 2.9e6 / 1.5 < radial.max() < 2.9e6 * 1.5


def test_centred_well_voltages_are_point_symmetric(example_model, drive, guide):
    sol = solve_control_voltages(example_model, drive, 0.0, guide=guide)
    labels = example_model.labels
    volts = {lab: sol.voltages[labels.index(lab)] for lab in sol.controls}
    scale = np.abs(sol.voltages).max()
    # the layout is invariant under (x, z) -> (-x, -z), which swaps dcaK and dcb(22-K)
    for lab, v in volts.items():
        twin = f"dc{'b' if lab[2] == 'a' else 'a'}{22 - int(lab[3:]):02d}"
        assert volts[twin] == pytest.approx(v, abs=1e-6 * scale)


def test_tiny_bound_is_infeasible(example_model, drive, guide):
    with pytest.raises(InfeasibleBoundError):
        solve_control_voltages(example_model, drive, -30.0, bound=0.01, guide=guide)


def test_guide_rejects_points_outside_range(guide):
    with pytest.raises(ValueError):
        guide.points([500.0])


def test_short_waveform_tracks(example_model, drive, guide):
    wf = transport_waveform(example_model, drive, -60.0, 0.0, n_steps=6, update_rate=500e3,
                            guide=guide)
    assert wf.n_steps == 6
    assert wf.duration == pytest.approx(12e-6)
    assert wf.positions[0] == -60.0 and wf.positions[-1] == 0.0
    track = track_waveform(example_model, drive, wf, guide)
    assert np.abs(track[:, 2] - wf.positions).max() < 0.5


def test_stationary_waveform_is_constant(example_model, drive, guide):
    wf = transport_waveform(example_model, drive, 0.0, 0.0, n_steps=4, update_rate=500e3,
                            guide=guide)
    assert np.allclose(wf.steps, wf.steps[0], atol=1e-12)
    assert wf.max_step_change() < 1e-12


def test_waveform_validation():
    with pytest.raises(ValueError):
        Waveform(np.zeros((2, 3)), 0.0, ["a", "b", "c"], np.zeros(2))
    with pytest.raises(InfeasibleBoundError):
        Waveform(np.full((2, 3), 7.0), 1.0, ["a", "b", "c"], np.zeros(2), bound=6.0)
    wf = Waveform(np.zeros((4, 3)), 2.0, ["a", "b", "c"], np.zeros(4))
    assert wf.duration == 2.0
    assert wf.max_step_change() == 0.0
