import math

import numpy as np
import pytest

from mirrortrap.analytic import MirrorSpec
from mirrortrap.optics.analysis import (
    REFERENCE_MIRROR, collection_efficiency, crosstalk_ratio, efficiency_oracle, misalignment_scan,
    spot_report, spot_vs_field_height)
from mirrortrap.optics.design import RelayDesign, load_relay, spot_metrics
from mirrortrap.optics.rays import (
    DIRECT, MIRROR, PLANAR, Micromirror, RayBundle, reflect_mirror, sample_emission)
from mirrortrap.optics.system import (
    HIT, LOST, REFRACT, STOP, VIGNETTED, OpticalPrescription, OpticalSurface, refract, trace)

MM = Micromirror.from_spec(REFERENCE_MIRROR)


def _lens(f=100.0, n=1.5, aperture=20.0):
    """Thin equiconvex lens at z = f with focal length close to ``f``."""
    r = 2 * (n - 1.0) * f
    return [OpticalSurface(REFRACT, f, aperture, r, n),
            OpticalSurface(REFRACT, f + 0.5, aperture, -r, 1.0)]


# -- sampling ---------------------------------------------------------------


def test_emission_is_isotropic():
    b = sample_emission(np.zeros(3), 200_000, seed=1)
    assert np.allclose(np.linalg.norm(b.directions, axis=1), 1.0)
    n = len(b)
    assert np.linalg.norm(b.directions.mean(axis=0)) < 3 / math.sqrt(n)
    # fraction in the upper hemisphere and in a cone of NA 0.5
    assert np.mean(b.directions[:, 2] > 0) == pytest.approx(0.5, abs=2 / math.sqrt(n))
    cone = np.mean(b.directions[:, 2] > math.sqrt(0.75))
    assert cone == pytest.approx(0.5 * (1 - math.sqrt(0.75)), abs=2e-3)


def test_emission_is_repeatable():
    a = sample_emission(np.zeros(3), 1000, seed=7)
    b = sample_emission(np.zeros(3), 1000, seed=7)
    c = sample_emission(np.zeros(3), 1000, seed=8)
    assert np.array_equal(a.directions, b.directions)
    assert not np.array_equal(a.directions, c.directions)


def test_cone_sampling_scales_emitted():
    b = sample_emission(np.zeros(3), 1000, axis=(0, 0, 1), half_angle=math.pi / 3)
    assert b.emitted == pytest.approx(1000 / (0.5 * (1 - 0.5)))
    assert np.all(b.directions[:, 2] >= 0.5 - 1e-12)


def test_bundle_validation():
    with pytest.raises(ValueError):
        RayBundle(np.zeros((1, 3)), [[0, 0, 2.0]], 1.0, 0)
    with pytest.raises(ValueError):
        RayBundle(np.zeros((1, 3)), [[0, 0, 1.0]], 1.5, 0)
    with pytest.raises(ValueError):
        sample_emission(np.zeros(3), 0)


# -- micromirror ------------------------------------------------------------


def test_axial_ray_retroreflects():
    b = RayBundle([MM.focus()], [[0, 0, -1.0]], 1.0, DIRECT)
    out = reflect_mirror(b, MM, 0.85)
    assert out.tags[0] == MIRROR
    assert np.allclose(out.directions[0], [0, 0, 1.0])
    assert out.weights[0] == pytest.approx(0.85)
    assert out.origins[0, 2] == pytest.approx(-MM.sag)


def test_paraxial_collimation():
    # rays from the focus striking the cap with normal sin angle <= 0.3
    alpha = np.linspace(0.0, math.asin(0.3), 20)[1:]
    hit = np.column_stack([MM.roc * np.sin(alpha), np.zeros_like(alpha),
                           MM.roc * (1 - np.cos(alpha)) - MM.sag])
    d = hit - MM.focus()
    d /= np.linalg.norm(d, axis=1)[:, None]
    out = reflect_mirror(RayBundle(np.tile(MM.focus(), (len(d), 1)), d, 1.0, DIRECT), MM)
    assert np.all(out.tags == MIRROR)
    angle = np.degrees(np.arccos(out.directions[:, 2]))
    assert angle.max() < 5.0


def test_zero_reflectivity_and_upward_rays():
    b = sample_emission(MM.focus(), 5000, seed=2)
    out = reflect_mirror(b, MM, 0.0, 0.0)
    up = b.directions[:, 2] > 0
    assert np.all(out.weights[~up] == 0.0)
    assert np.allclose(out.directions[up], b.directions[up], atol=1e-15)
    with pytest.raises(ValueError):
        reflect_mirror(b, MM, 1.2)


def test_flat_surround_reflection_preserves_rays():
    flat = Micromirror(1.0, 0.0, 0.0)
    b = sample_emission(np.array([0.0, 0.0, 0.1]), 4000, seed=3)
    out = reflect_mirror(b, flat, 0.85, 1.0)
    down = b.directions[:, 2] < 0
    assert len(out) == len(b)
    assert np.all(out.tags[down] == PLANAR)
    assert np.allclose(out.weights, 1.0)
    assert np.allclose(out.directions[down, 2], -b.directions[down, 2])
    assert np.allclose(out.directions[down, :2], b.directions[down, :2])
    assert np.allclose(out.origins[down, 2], 0.0, atol=1e-15)


def test_flat_reflection_is_mirror_symmetric():
    flat = Micromirror(1.0, 0.0, 0.0)
    ion = np.array([0.0, 0.0, 0.1])
    b = sample_emission(ion, 2000, seed=4)
    out = reflect_mirror(b, flat, 0.85, 1.0)
    down = b.directions[:, 2] < 0
    # reflected rays appear to come from the image point below the plane
    o, d = out.origins[down], out.directions[down]
    t = (-ion[2] - o[:, 2]) / d[:, 2]
    virtual = o + t[:, None] * d
    assert np.allclose(virtual[:, :2], 0.0, atol=1e-12)


# -- sequential tracing -----------------------------------------------------


def test_empty_prescription_propagates_straight():
    rx = OpticalPrescription([], image_z=10.0)
    b = RayBundle(np.zeros((2, 3)), [[0, 0, 1.0], [0.6, 0, 0.8]], 1.0, 0)
    res = trace(rx, b)
    assert np.all(res.status == HIT)
    assert res.x == pytest.approx([0.0, 7.5])


def test_pinhole_stop_vignettes():
    rx = OpticalPrescription([OpticalSurface(STOP, 5.0, 1.0)], image_z=10.0)
    b = RayBundle(np.zeros((2, 3)), [[0, 0, 1.0], [0.6, 0, 0.8]], 1.0, 0)
    assert list(trace(rx, b).status) == [HIT, VIGNETTED]


def test_snell_law_holds_per_refraction(relay):
    b = sample_emission(np.zeros(3), 5000, seed=5, axis=(0, 0, 1), half_angle=math.asin(0.14))
    _, pairs = trace(relay, b, record_snell=True)
    assert len(pairs) == 8
    for lhs, rhs in pairs:
        assert np.allclose(lhs, rhs, atol=1e-12)


def test_total_internal_reflection_flagged():
    d = np.array([[math.sin(0.9), 0.0, math.cos(0.9)]])
    out, tir = refract(d, np.array([[0.0, 0.0, -1.0]]), 1.5, 1.0)
    assert tir[0]
    # glass-to-air at a steep convex surface: the outer ray meets it at 64 degrees
    rx = OpticalPrescription([OpticalSurface(REFRACT, 1.0, 50.0, None, 1.5),
                              OpticalSurface(REFRACT, 2.0, 50.0, 2.0, 1.0)], image_z=10.0)
    b = RayBundle([[1.8, 0, 0], [0.2, 0, 0]], [[0, 0, 1.0], [0, 0, 1.0]], 1.0, 0)
    assert list(trace(rx, b).status) == [LOST, HIT]


def test_weight_bookkeeping(relay):
    b = sample_emission(MM.focus(), 20_000, seed=6)
    out = reflect_mirror(b, MM, 0.85, 0.85)
    res = trace(relay, out)
    absorbed = b.emitted - out.weights.sum()
    parts = [res.weights[res.status == s].sum() for s in (HIT, VIGNETTED, LOST)]
    assert (sum(parts) + absorbed) / b.emitted == pytest.approx(1.0, abs=1e-12)


def test_abcd_matches_trace_for_small_na():
    f = 100.0
    rx = OpticalPrescription(_lens(f), image_z=0.0)
    assert abs(rx.paraxial_image()[0]) > 1e4  # object near the front focal plane
    rx = OpticalPrescription(_lens(f), image_z=0.0, object_z=-f)
    z_img, mag = rx.paraxial_image()
    assert z_img == pytest.approx(3 * f, rel=0.01)
    assert mag == pytest.approx(-1.0, rel=0.01)
    lens_exit = rx.surfaces[-1].z
    for na in (0.005, 0.01, 0.02):
        # axial crossing of a marginal ray from the on-axis object point
        d = [[na, 0, math.sqrt(1 - na * na)]]
        res = trace(rx.with_image_z(lens_exit), RayBundle([[0, 0, -f]], d, 1.0, 0))
        x, dx, dz = res.x[0], res.directions[0, 0], res.directions[0, 2]
        assert lens_exit - x * dz / dx == pytest.approx(z_img, rel=0.01)
        # image height of an off-axis point, averaged over a ring of rays
        h = 0.5
        phi = np.linspace(0, 2 * math.pi, 8, endpoint=False)
        d = np.column_stack([na * np.cos(phi), na * np.sin(phi), np.full(8, math.sqrt(1 - na * na))])
        res = trace(rx.with_image_z(z_img), RayBundle(np.tile([h, 0, -f], (8, 1)), d, 1.0, 0))
        assert res.x.mean() == pytest.approx(mag * h, rel=0.01)


def test_abcd_rejects_mirrors():
    from mirrortrap.optics.system import MIRROR as MIRROR_SURFACE
    rx = OpticalPrescription([OpticalSurface(MIRROR_SURFACE, 5.0, 10.0)], image_z=10.0)
    with pytest.raises(ValueError):
        rx.system_matrix()


def test_flat_mirror_in_prescription_folds_back():
    from mirrortrap.optics.system import MIRROR as MIRROR_SURFACE
    rx = OpticalPrescription([OpticalSurface(MIRROR_SURFACE, 5.0, 10.0)], image_z=0.0)
    b = RayBundle([[0.0, 0, 0]], [[0.1, 0, math.sqrt(0.99)]], 1.0, 0)
    res = trace(rx, b)
    assert res.hit[0]
    assert res.x[0] == pytest.approx(2 * 5.0 * 0.1 / math.sqrt(0.99))


def test_prescription_json_roundtrip(tmp_path, relay):
    path = tmp_path / "rx.json"
    relay.save(path)
    back = OpticalPrescription.load(path)
    assert back.image_z == pytest.approx(relay.image_z, abs=1e-12)
    for a, b in zip(relay.surfaces, back.surfaces):
        assert a.kind == b.kind and a.radius == b.radius and a.index == b.index
        assert a.z == pytest.approx(b.z, abs=1e-12)
    with pytest.raises(ValueError):
        OpticalPrescription.from_dict({"surfaces": []})


def test_unknown_surface_kind():
    with pytest.raises(ValueError):
        OpticalSurface("lens", 0.0, 1.0)


# -- relay ------------------------------------------------------------------


def test_relay_is_unit_telecentric(relay):
    d = RelayDesign(**relay.meta["design"])
    assert relay.meta["efl_mm"] == pytest.approx(d.focal_data()[2])
    rx = OpticalPrescription([s for s in relay.surfaces if s.kind == REFRACT], relay.image_z)
    _, mag = rx.paraxial_image()
    assert mag == pytest.approx(-1.0, abs=1e-9)
    # chief ray from the field leaves parallel to the axis in image space
    h = 5.0
    b = RayBundle([[h, 0, 0]], [[0, 0, 1.0]], 1.0, 0)
    assert trace(relay, b).x[0] == pytest.approx(-h, abs=0.05)


def test_stop_limits_na(relay):
    ok = sample_emission(np.zeros(3), 2000, axis=(0, 0, 1), half_angle=math.asin(0.139))
    wide = sample_emission(np.zeros(3), 2000, axis=(0, 0, 1), half_angle=math.asin(0.3))
    assert trace(relay, ok).hit.all()
    res = trace(relay, wide)
    frac = res.hit.mean()
    expect = (1 - math.sqrt(1 - 0.14**2)) / (1 - math.sqrt(1 - 0.3**2))
    assert frac == pytest.approx(expect, abs=0.03)


def test_relay_spot_metrics(relay):
    # full-NA cones vignette off axis on the lens rims; radii stay small
    assert spot_metrics(relay, 0.0, 0.14)[2] == 0.0
    for x in (0.0, 4.0, 8.0):
        rms, rmax, vig = spot_metrics(relay, x, 0.14)
        assert rmax < 0.25 and vig < 0.5


def test_spot_report_small(relay):
    rep = spot_vs_field_height(relay, heights=[4.0], n=40_000)[0]
    assert rep.spot_radius < 0.25
    assert rep.enclosed_fraction == pytest.approx(1.0)
    total = rep.enclosed + rep.outside + rep.vignetted + rep.absorbed
    assert total == pytest.approx(1.0, abs=1e-12)


def test_crosstalk_trivial_cases(relay):
    m = Micromirror.from_spec(REFERENCE_MIRROR)
    # a detector far away from the image collects nothing, so all is cross-talk
    rep = spot_report(relay, m, m.focus(), (10.0, 10.0), n=20_000)
    assert rep.crosstalk == pytest.approx(1.0)
    # a huge detector encloses everything
    rep = spot_report(relay, m, m.focus(), (0.0, 0.0), n=20_000, detector_radius=100.0)
    assert rep.crosstalk == pytest.approx(0.0)


def test_crosstalk_independent_of_reflectivity_scale(relay):
    a = crosstalk_ratio(relay, n=40_000, reflectivity=0.85, planar_reflectivity=0.85)
    b = crosstalk_ratio(relay, n=40_000, reflectivity=0.5, planar_reflectivity=0.5)
    assert a == pytest.approx(b, abs=1e-12)


def test_on_axis_crosstalk_bound(relay):
    assert crosstalk_ratio(relay, field_height=0.0, n=100_000) <= 0.001


def test_zero_offset_matches_field_scan(relay):
    rows = misalignment_scan(relay, axial_offsets=(0.0,), heights=(8.0,), n=20_000)
    ref = spot_vs_field_height(relay, heights=[8.0], n=20_000)[0]
    assert rows[0][2].spot_radius == ref.spot_radius
    assert rows[0][2].enclosed == ref.enclosed


def test_misalignment_tolerance(relay):
    rows = misalignment_scan(relay, axial_offsets=(-4.0, 4.0), vertical_offsets=(-3.0, 3.0),
                             heights=(0.0, 8.0), n=40_000)
    assert len(rows) == 8
    assert min(rep.enclosed_fraction for _, _, rep in rows) >= 0.95


def test_min_separation_reported(relay):
    from mirrortrap.optics.analysis import min_separation
    sep = min_separation(relay, field_height=8.0, n=50_000)
    assert 0.25 < sep < 0.5


def test_misalignment_symmetry(relay):
    rows = misalignment_scan(relay, axial_offsets=(-3.0, 3.0), vertical_offsets=(),
                             heights=(0.0,), n=40_000)
    (_, _, lo), (_, _, hi) = rows
    assert lo.enclosed == pytest.approx(hi.enclosed, rel=0.02)
    assert lo.centroid[1] == pytest.approx(-hi.centroid[1], abs=5e-3)


# -- collection efficiency --------------------------------------------------


@pytest.mark.parametrize("na", [0.14, 0.43])
def test_efficiency_matches_oracle(na, oracle):
    res = collection_efficiency(REFERENCE_MIRROR, na, n=200_000, seed=1)
    assert res.efficiency == pytest.approx(res.oracle, abs=4 * res.stderr + 1e-4)
    assert res.oracle == pytest.approx(oracle[f"efficiency_mirror_na{na}"], rel=1e-3)


def test_planar_efficiency_oracle(oracle):
    for na in (0.14, 0.43):
        val = efficiency_oracle(None, na, 0.85, 62.5)
        assert val == pytest.approx(oracle[f"efficiency_planar_na{na}"], rel=1e-3)


def test_bare_cone_without_reflection():
    from mirrortrap.analytic import cone_efficiency
    for na in (0.14, 0.43):
        assert efficiency_oracle(None, na, 0.0, 62.5) == pytest.approx(cone_efficiency(na),
                                                                        rel=1e-12)
    res = collection_efficiency(None, 0.43, reflectivity=0.0, n=100_000)
    assert res.by_tag["planar"] == 0.0


def test_efficiency_by_tag_sums():
    res = collection_efficiency(REFERENCE_MIRROR, 0.14, n=50_000)
    assert sum(res.by_tag.values()) == pytest.approx(res.efficiency, abs=1e-12)
    assert res.detected() == pytest.approx(0.205 * res.efficiency)


def test_stderr_shrinks_as_sqrt_n():
    errs = [collection_efficiency(REFERENCE_MIRROR, 0.14, n=n, seed=3).stderr
            for n in (50_000, 200_000)]
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.1)


def test_mirror_beats_planar():
    m = collection_efficiency(MirrorSpec(150.0, 60.0), 0.14, n=100_000).efficiency
    p = collection_efficiency(None, 0.14, n=100_000).efficiency
    assert m > 5 * p
