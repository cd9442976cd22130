import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import light_from_rotations
from multilight.core import (Camera, GBuffer, LightRig, MultiLightSet, check_image, decode_normal,
                             encode_normal, light_position, light_positions, light_rig_default,
                             make_front_facing, wrap_angle)

angles = st.floats(0.0, 2 * math.pi, exclude_max=True)
phis = st.floats(0.0, math.pi / 2)


def test_default_rig_poses():
    rig = light_rig_default()
    assert len(rig) == 9
    assert rig.poses[0] == (0.0, pytest.approx(math.pi / 6))
    assert rig.poses[8] == (0.0, 0.0)
    assert rig.poses[3][0] == pytest.approx(3 * math.pi / 4)
    assert rig.poses[3][1] == pytest.approx(math.pi / 3)


def test_default_rig_alternates_phi():
    phis_ = [p for _, p in light_rig_default().poses]
    assert phis_[:8] == pytest.approx([math.pi / 6, math.pi / 3] * 4)
    assert sum(p == 0.0 for p in phis_) == 1
    for t, _ in light_rig_default().poses:
        assert 0.0 <= t < 2 * math.pi


def test_wrap_angle():
    assert wrap_angle(2 * math.pi) == 0.0
    assert wrap_angle(-0.5) == pytest.approx(2 * math.pi - 0.5)
    assert wrap_angle(6.4) == pytest.approx(6.4 - 2 * math.pi)
    assert wrap_angle(-1e-18) < 2 * math.pi


def test_light_position_examples():
    cam = Camera()
    rig = LightRig(((1.3, 0.0), (0.0, math.pi / 2), (math.pi / 4, math.pi / 3)), radius=4.0)
    np.testing.assert_allclose(light_position(rig, 0, cam), (0, 0, 4), atol=1e-12)
    np.testing.assert_allclose(light_position(rig, 1, cam), (4, 0, 0), atol=1e-12)
    p = light_position(rig, 2, cam)
    np.testing.assert_allclose(p, 4 * np.array([0.6124, 0.6124, 0.5]), atol=2e-4)
    assert np.linalg.norm(p) == pytest.approx(4.0, rel=1e-12)
    assert p @ np.array([0, 0, 1.0]) / np.linalg.norm(p) == pytest.approx(0.5, abs=1e-12)


def test_light_position_index_error():
    with pytest.raises(IndexError):
        light_position(light_rig_default(), 9, Camera())


def test_degenerate_basis():
    with pytest.raises(ValueError, match="degenerate camera basis"):
        light_positions([(0.0, 0.1)], 4.0, Camera(position=(0, 0, 4), up=(0, 0, 1), look_at=(1, 0, 0)))


@settings(max_examples=200, deadline=None)
@given(angles, phis, st.floats(0.5, 10.0),
       st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5)).filter(
           lambda p: np.linalg.norm(p) > 0.5 and np.linalg.norm(np.cross(p, (0, 1, 0))) > 0.1 * np.linalg.norm(p)))
def test_light_position_properties(theta, phi, radius, pos):
    cam = Camera(position=pos, width=4, height=4)
    p = light_positions([(theta, phi)], radius, cam)[0]
    c = np.asarray(pos) / np.linalg.norm(pos)
    assert np.linalg.norm(p) == pytest.approx(radius, rel=1e-9)
    ang = math.acos(np.clip(p @ c / np.linalg.norm(p), -1, 1))
    assert ang == pytest.approx(phi, abs=1e-7)
    np.testing.assert_allclose(p, light_from_rotations(theta, phi, radius, pos, cam.up), atol=1e-9)


def test_encode_examples():
    np.testing.assert_allclose(encode_normal([0, 0, 1]), [0.5, 0.5, 1.0])
    np.testing.assert_allclose(encode_normal([-1, 0, 0]), [0, 0.5, 0.5])
    n = np.array([1, 2, 3]) / math.sqrt(14)
    q = np.round(encode_normal(n) * 255) / 255
    np.testing.assert_allclose(decode_normal(q), n, atol=1e-2)


@settings(max_examples=200, deadline=None)
@given(st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)).filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_encode_roundtrip(v):
    n = np.asarray(v) / np.linalg.norm(v)
    assert np.max(np.abs(decode_normal(encode_normal(n)) - n)) < 1e-6


def test_decode_zero_raises():
    with pytest.raises(ValueError):
        decode_normal([0.5, 0.5, 0.5])


def test_make_front_facing():
    n = make_front_facing(np.array([[0.6, 0.0, -0.8], [0.0, 0.6, 0.8]]))
    np.testing.assert_allclose(n[0], [1, 0, 0])
    np.testing.assert_allclose(n[1], [0, 0.6, 0.8])


def test_camera_validation():
    with pytest.raises(ValueError):
        Camera(position=(0, 0, 0))
    with pytest.raises(ValueError):
        Camera(up=(0, 0, 1))
    with pytest.raises(ValueError):
        Camera(vfov=math.pi)


def test_camera_center_ray():
    origin, dirs = Camera(width=3, height=3).rays()
    np.testing.assert_allclose(dirs[1, 1], [0, 0, -1], atol=1e-12)
    assert dirs[0, 1, 1] > 0  # top row looks up
    assert dirs[1, 2, 0] > 0  # right column looks right
    np.testing.assert_allclose(Camera().basis() @ np.array([0, 0, 1.0]), [0, 0, 1])


def test_camera_dict_roundtrip():
    cam = Camera(position=(1, 2, 3), vfov=0.7, width=10, height=5)
    assert Camera.from_dict(cam.to_dict()) == cam


def test_rig_validation():
    with pytest.raises(ValueError):
        LightRig(())
    with pytest.raises(ValueError):
        LightRig(((2 * math.pi, 0.0),))
    with pytest.raises(ValueError):
        LightRig(((0.0, 2.0),))
    rig = light_rig_default()
    assert LightRig.from_dict(rig.to_dict()) == rig
    assert rig.subset([8, 0]).poses == (rig.poses[8], rig.poses[0])


def test_check_image():
    assert check_image(np.zeros((2, 3))).shape == (2, 3, 1)
    with pytest.raises(ValueError):
        check_image(np.zeros((2, 3, 2)))
    with pytest.raises(ValueError):
        check_image(np.full((2, 2, 3), np.nan))


def test_gbuffer_clamps_and_validates():
    n = np.zeros((2, 2, 3))
    n[..., 2] = 1
    gb = GBuffer(n, np.full((2, 2, 3), 1.5), np.full((2, 2), -1.0), np.ones((2, 2)), np.ones((2, 2)))
    assert gb.albedo.max() == 1.0 and gb.roughness.min() == 0.0
    gb.validate()
    assert gb.alpha.dtype == bool
    with pytest.raises(ValueError):
        gb.normal[0, 0, 0] = 1.0
    bad = gb.replace(normal=n * 2)
    with pytest.raises(ValueError):
        bad.validate()


def test_multilight_set_checks():
    imgs = np.zeros((2, 4, 4, 3))
    with pytest.raises(ValueError):
        MultiLightSet(imgs, ((0.0, 0.0),), np.zeros((4, 4, 3)), np.ones((4, 4)))
    with pytest.raises(ValueError):
        MultiLightSet(imgs, ((0.0, 0.0), (1.0, 0.2)), np.zeros((3, 4, 3)), np.ones((4, 4)))
    mls = MultiLightSet(imgs, ((0.0, 0.0), (1.0, 0.2)), np.zeros((4, 4, 3)), np.ones((4, 4)))
    assert len(mls.subset([1])) == 1 and mls.subset([1]).poses == ((1.0, 0.2),)
