"""Cylindrical placement sampling and rig files."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vcap.geometry import GeometryError, Intrinsics, project
from vcap.sampling import (
    CylindricalSample,
    SamplingParams,
    UniformGrid,
    default_rig,
    load_rig,
    load_rig_sampling,
    look_at_rotation,
    placement_params,
    pose_from_cylindrical,
    sample_placement,
    sample_rig,
    save_rig,
)

K = Intrinsics(fx=230.0, fy=230.0, cx=160.0, cy=90.0, width=320, height=180)


def test_grid_contains_endpoints_and_step():
    grid = UniformGrid(1.75, 2.25, 0.02)
    pts = grid.points()
    assert pts[0] == 1.75
    assert pts[-1] == pytest.approx(2.25)
    assert len(pts) == 26
    np.testing.assert_allclose(np.diff(pts), 0.02)


@given(st.floats(-5, 5), st.floats(0.01, 2.0), st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_grid_draws_stay_on_grid(lower, step, seed):
    grid = UniformGrid(lower, lower + 7 * step, step)
    value = grid.draw(np.random.default_rng(seed))
    assert lower - 1e-9 <= value <= grid.upper + 1e-9
    offset = (value - lower) / step
    assert abs(offset - round(offset)) < 1e-6


def test_grid_validation():
    with pytest.raises(GeometryError):
        UniformGrid(0.0, 1.0, 0.0)
    with pytest.raises(GeometryError):
        UniformGrid(1.0, 0.0, 0.1)


def test_camera_position_formula():
    sample = CylindricalSample(radius_m=2.0, azimuth_deg=30.0, height_m=0.5, euler_deg=(0, 0, 0))
    pose = pose_from_cylindrical(sample)
    a = np.radians(30.0)
    np.testing.assert_allclose(
        pose.translation, [2.0 * np.cos(a), 0.5, 2.0 * np.sin(a)], atol=1e-12
    )


def test_look_at_centers_the_target():
    # Project the aim target with the look-at pose: it must land exactly on
    # the principal point.
    sample = CylindricalSample(radius_m=1.9, azimuth_deg=123.0, height_m=0.4, euler_deg=(0, 0, 0))
    pose = pose_from_cylindrical(sample)
    origin_cam = pose.inverse().apply(np.zeros(3))
    uv = project(origin_cam, K)
    np.testing.assert_allclose(uv, [K.cx, K.cy], atol=1e-9)
    # camera y axis has no upward world component (x right, y down)
    assert pose.rotation[1, 1] <= 0


def test_look_at_degenerate_cases():
    with pytest.raises(GeometryError):
        look_at_rotation(np.zeros(3), np.zeros(3))
    with pytest.raises(GeometryError):
        look_at_rotation(np.array([0.0, 1.0, 0.0]), np.zeros(3))  # parallel to up


def test_euler_noise_changes_orientation_not_position():
    base = CylindricalSample(radius_m=2.0, azimuth_deg=45.0, height_m=0.3, euler_deg=(0, 0, 0))
    tilted = CylindricalSample(radius_m=2.0, azimuth_deg=45.0, height_m=0.3, euler_deg=(5.0, -2.5, 7.5))
    pa, pb = pose_from_cylindrical(base), pose_from_cylindrical(tilted)
    np.testing.assert_allclose(pa.translation, pb.translation, atol=1e-12)
    assert not np.allclose(pa.rotation, pb.rotation)


def test_bands_partition_azimuth():
    params = SamplingParams(sensors=4)
    assert [params.azimuth_center(n) for n in (1, 2, 3, 4)] == [90.0, 180.0, 270.0, 360.0]
    with pytest.raises(GeometryError):
        params.azimuth_center(0)
    with pytest.raises(GeometryError):
        params.azimuth_center(5)


def test_sampled_placements_respect_bounds():
    params = SamplingParams(sensors=6)
    rng = np.random.default_rng(2)
    for n in range(1, 7):
        _, sample = sample_placement(n, params, rng)
        assert params.radius_m.lower <= sample.radius_m <= params.radius_m.upper
        assert params.height_m.lower <= sample.height_m <= params.height_m.upper
        center = params.azimuth_center(n)
        assert abs(sample.azimuth_deg - center) <= 10.0 + 1e-9


def test_rig_is_deterministic_and_named():
    a = sample_rig(SamplingParams(sensors=3), 42)
    b = sample_rig(SamplingParams(sensors=3), 42)
    c = sample_rig(SamplingParams(sensors=3), 43)
    assert [s.eye_id for s in a] == ["eye1", "eye2", "eye3"]
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.pose.rotation, y.pose.rotation)
        np.testing.assert_array_equal(x.pose.translation, y.pose.translation)
    assert any(
        not np.allclose(x.pose.translation, y.pose.translation) for x, y in zip(a, c)
    )


def test_aimed_rig_has_zero_tilt():
    rig = default_rig(4, seed=5, aimed=True)
    for sensor in rig:
        assert sensor.sample.euler_deg == (0.0, 0.0, 0.0)


def test_rig_file_round_trip(tmp_path):
    params = SamplingParams(sensors=4)
    rig = sample_rig(params, 9)
    path = tmp_path / "rig.json"
    save_rig(path, rig, params)
    loaded = load_rig(path)
    assert [s.eye_id for s in loaded] == [s.eye_id for s in rig]
    for a, b in zip(loaded, rig):
        np.testing.assert_allclose(a.pose.rotation, b.pose.rotation, atol=1e-12)
        np.testing.assert_allclose(a.pose.translation, b.pose.translation, atol=1e-12)
        assert a.sample.radius_m == pytest.approx(b.sample.radius_m)
    again = load_rig_sampling(path)
    assert again == params


def test_rig_file_errors(tmp_path):
    missing = tmp_path / "nope.json"
    with pytest.raises(GeometryError):
        load_rig(missing)
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    with pytest.raises(GeometryError):
        load_rig(bad)
    bad.write_text('{"sensors": [{"eye": "a"}]}')
    with pytest.raises(GeometryError):
        load_rig(bad)


def test_placement_params_restriction():
    params = placement_params(4, radius_center=1.9, height_low=0.38, euler_span=0.0)
    assert params.radius_m.lower == pytest.approx(1.8)
    assert params.radius_m.upper == pytest.approx(2.0)
    assert params.height_m.lower == params.height_m.upper == 0.38
    assert params.euler_noise_deg.draw(np.random.default_rng(0)) == 0.0


def test_params_dict_round_trip():
    params = placement_params(5, radius_center=1.5, height_low=0.38, height_high=0.48)
    again = SamplingParams.from_dict(params.to_dict())
    assert again == params
