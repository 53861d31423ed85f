"""Software renderer: depth, normals and labels of the box structure."""

import numpy as np
import pytest

from vcap.geometry import Intrinsics, Pose, backproject, rot_y
from vcap.render import RenderStats, render, render_pair
from vcap.sampling import CylindricalSample, pose_from_cylindrical
from vcap.structure import BoxSpec, assemble, default_structure

K = Intrinsics(fx=230.0, fy=230.0, cx=160.0, cy=90.0, width=320, height=180)


def axis_camera(distance: float) -> Pose:
    """Camera on the +z structure axis looking back at the origin
    (camera-from-structure)."""
    sample = CylindricalSample(radius_m=distance, azimuth_deg=90.0, height_m=0.0, euler_deg=(0, 0, 0))
    return pose_from_cylindrical(sample).inverse()


def test_known_face_distance():
    # A single axis-aligned box seen head-on: the ray through the principal
    # point hits the facing side at distance - half_extent.
    model = assemble([BoxSpec(np.array([0.3, 0.2, 0.2]), np.zeros(3), 0.0)])
    view = render(model, axis_camera(2.0), K)
    cy, cx = int(K.cy), int(K.cx)
    assert view.depth[cy, cx] == pytest.approx(2.0 - 0.2, abs=1e-6)
    assert view.label[cy, cx] == 5  # +z face is the fifth side


def test_structure_origin_projects_to_principal_point(model, aimed_rig):
    # Look-at orientation sends the aim target through the image centre;
    # with the structure spanning the origin that pixel must be hit.
    for sensor in aimed_rig:
        view = render(model, sensor.pose.inverse(), K)
        assert view.depth[int(K.cy), int(K.cx)] > 0


def test_depth_label_normal_consistency(clean_views):
    for view in clean_views:
        hit = view.depth > 0
        assert np.array_equal(hit, view.label > 0)
        lengths = np.linalg.norm(view.normal, axis=-1)
        np.testing.assert_allclose(lengths[hit], 1.0, atol=1e-9)
        assert np.all(lengths[~hit] == 0)


def test_normals_face_the_camera(clean_views):
    for view in clean_views:
        cloud = backproject(view.depth, K)
        us, vs = cloud.pixels[:, 0], cloud.pixels[:, 1]
        dots = np.einsum("ij,ij->i", view.normal[vs, us], cloud.points)
        assert np.all(dots < 0)


def test_rendered_normals_match_face_planes():
    model = assemble([BoxSpec(np.array([0.3, 0.2, 0.2]), np.zeros(3), 0.0)])
    cam = axis_camera(2.0)
    view = render(model, cam, K)
    face = model.side_by_id(5)
    expected = cam.rotate(face.normal)
    mask = view.label == 5
    assert mask.sum() > 100
    np.testing.assert_allclose(view.normal[mask], np.broadcast_to(expected, (mask.sum(), 3)), atol=1e-9)


def test_z_buffer_keeps_the_nearer_box():
    # Two boxes on the camera axis; the nearer one must own the centre pixel.
    near = BoxSpec(np.array([0.1, 0.1, 0.1]), np.array([0.0, 0.0, 1.0]), 0.0)
    far = BoxSpec(np.array([0.3, 0.3, 0.3]), np.array([0.0, 0.0, -0.5]), 0.0)
    model = assemble([near, far])
    view = render(model, axis_camera(3.0), K)
    cy, cx = int(K.cy), int(K.cx)
    assert view.label[cy, cx] == 5  # +z face of box 0 (the near one)
    assert view.depth[cy, cx] == pytest.approx(3.0 - 1.0 - 0.1, abs=1e-6)
    # the far box is still visible around the near one
    assert np.any(view.label == 11)  # +z face of box 1


def test_points_lie_on_the_structure(model, aimed_rig, clean_views):
    # Back-projected pixels, mapped into the structure frame, must sit on
    # some box surface (distance to the nearest face plane about zero).
    sensor, view = aimed_rig[0], clean_views[0]
    cloud = backproject(view.depth, K)
    world = sensor.pose.apply(cloud.points)
    us, vs = cloud.pixels[:, 0], cloud.pixels[:, 1]
    labels = view.label[vs, us]
    for side in model.sides:
        mask = labels == side.side_id
        if not mask.any():
            continue
        offsets = (world[mask] - side.center) @ side.normal
        assert np.abs(offsets).max() < 2e-3


def test_occluded_sides_do_not_leak(model):
    # From a side view, faces pointing away must never appear in the label raster.
    cam = axis_camera(2.2)
    view = render(model, cam, K)
    present = set(np.unique(view.label)) - {0}
    for side_id in present:
        n_cam = cam.rotate(model.side_by_id(int(side_id)).normal)
        center_cam = cam.apply(model.side_by_id(int(side_id)).center)
        assert np.dot(n_cam, center_cam) < 0


def test_render_is_deterministic(model, aimed_rig):
    a = render(model, aimed_rig[1].pose.inverse(), K)
    b = render(model, aimed_rig[1].pose.inverse(), K)
    np.testing.assert_array_equal(a.depth, b.depth)
    np.testing.assert_array_equal(a.label, b.label)
    np.testing.assert_array_equal(a.normal, b.normal)


def test_camera_inside_structure_is_counted_not_fatal(model):
    stats = RenderStats()
    inside = Pose(rot_y(0.0), np.array([0.05, -0.6, 0.03])).inverse()
    view = render(model, inside, K, stats)
    assert stats.camera_inside_boxes == 1
    assert view.depth.shape == K.shape


def test_render_pair_matches_render(model, aimed_rig):
    pair = render_pair(model, aimed_rig[2].pose.inverse(), K)
    plain = render(model, aimed_rig[2].pose.inverse(), K)
    np.testing.assert_array_equal(pair.depth, plain.depth)
    np.testing.assert_array_equal(pair.label, plain.label)
