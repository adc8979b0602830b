import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from terrashadow.errors import DatumMismatchError, InvalidInputError
from terrashadow.geodesy import Datum, GeodeticPosition, frame_at
from terrashadow.optics import (
    CALIBRATED_CONVENTION,
    CameraModel,
    GimbalLimits,
    GimbalState,
    IDENTITY_GIMBAL,
    camera_ray_to_world,
    euler_to_matrix,
    matrix_to_quat,
    pixel_to_camera_ray,
    quat_conjugate,
    quat_from_rotvec,
    quat_multiply,
    quat_rotate,
    quat_to_matrix,
    stare_solution,
    world_to_pixel,
)

CAM = CameraModel(74.0, 1920, 1080)
TABLE_Q = (0.056115267, -0.0154703723, 0.9608545, 0.27086953)
DRONE = GeodeticPosition(36.212189, -96.006905, 195.0)

# 40-digit mpmath evaluations of the pinhole formula for the reference camera.
FOCAL_PX = 1273.9630287555936357
TILT_810 = 11.966036148208732909       # atan(270 / f)
TILT_810_HALF = 11.987555009764250387  # atan(270.5 / f)


def angle_deg(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    c = np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b))
    return math.degrees(math.acos(max(-1.0, min(1.0, c))))


unit_quats = st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(
    lambda v: sum(c * c for c in v) > 1e-2
).map(lambda v: tuple(np.asarray(v) / np.linalg.norm(v)))
vectors = st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3)


def test_camera_model():
    assert CAM.focal_px == pytest.approx(FOCAL_PX, abs=1e-9)
    assert CAM.fov_v_deg == pytest.approx(2 * math.degrees(math.atan(540 / FOCAL_PX)), abs=1e-12)
    with pytest.raises(InvalidInputError):
        CameraModel(180.0, 10, 10)
    with pytest.raises(InvalidInputError):
        CameraModel(60.0, 0, 10)


def test_center_pixel_is_optical_axis():
    assert np.array_equal(pixel_to_camera_ray(CAM, (960, 540)), [0.0, 0.0, 1.0])
    half = pixel_to_camera_ray(CAM, (959.5, 539.5), pixel_offset=0.5)
    assert np.allclose(half, (0, 0, 1), atol=1e-3)


def test_left_edge_angle():
    r = pixel_to_camera_ray(CAM, (0, 540))
    assert math.degrees(math.atan2(r[0], r[2])) == pytest.approx(-37.0, abs=1e-12)
    r = pixel_to_camera_ray(CAM, (0, 540), pixel_offset=0.5)
    assert math.degrees(math.atan2(r[0], r[2])) == pytest.approx(-37.0, abs=0.05)


def test_table_pixel_tilt():
    r = pixel_to_camera_ray(CAM, (960, 810))
    assert math.degrees(math.atan2(r[1], r[2])) == pytest.approx(TILT_810, abs=1e-10)
    r = pixel_to_camera_ray(CAM, (960, 810), pixel_offset=0.5)
    assert math.degrees(math.atan2(r[1], r[2])) == pytest.approx(TILT_810_HALF, abs=1e-10)


def test_pixel_outside_frame():
    for px in [(-1, 0), (1920, 0), (0, 1080), (math.nan, 3)]:
        with pytest.raises(InvalidInputError):
            pixel_to_camera_ray(CAM, px)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1918), st.floats(0, 1078), st.floats(1e-3, 1.0))
def test_pixel_ray_monotone(x, y, dx):
    a = pixel_to_camera_ray(CAM, (x, y))
    b = pixel_to_camera_ray(CAM, (x + dx, y))
    c = pixel_to_camera_ray(CAM, (x, y + dx))
    assert math.atan2(b[0], b[2]) > math.atan2(a[0], a[2])
    assert math.atan2(c[1], c[2]) > math.atan2(a[1], a[2])


def test_identity_maps_axis_to_reference_direction():
    # Calibrated mount: optical axis is body forward, which is East at identity.
    assert np.allclose(camera_ray_to_world((0, 0, 1), IDENTITY_GIMBAL), (1, 0, 0), atol=1e-15)
    assert np.allclose(camera_ray_to_world((1, 0, 0), IDENTITY_GIMBAL), (0, -1, 0), atol=1e-15)
    assert np.allclose(camera_ray_to_world((0, 1, 0), IDENTITY_GIMBAL), (0, 0, -1), atol=1e-15)


def test_table_ray_points_north_west_and_down():
    g = GimbalState.from_quaternion(TABLE_Q)
    e, n, u = camera_ray_to_world(pixel_to_camera_ray(CAM, (960, 810)), g)
    assert e < 0 and n > 0 and u < 0


def test_non_unit_quaternion_rejected():
    with pytest.raises(InvalidInputError):
        GimbalState((0.0, 0.0, 0.0, 2.0))
    with pytest.raises(InvalidInputError):
        GimbalState((0.0, 0.0, 1.0))


def test_table_quaternion_within_norm_tolerance():
    n = math.sqrt(sum(c * c for c in TABLE_Q))
    assert abs(n - 1) < 1e-6
    assert GimbalState(TABLE_Q).orientation_q == pytest.approx(tuple(c / n for c in TABLE_Q), abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(unit_quats, vectors)
def test_rotation_group_properties(q, v):
    w = quat_rotate(q, v)
    assert abs(np.linalg.norm(w) - np.linalg.norm(v)) <= 1e-12 * max(1.0, np.linalg.norm(v))
    back = quat_rotate(quat_conjugate(q), w)
    assert np.allclose(back, v, rtol=0, atol=1e-12 * max(1.0, np.linalg.norm(v)))


@settings(max_examples=100, deadline=None)
@given(unit_quats, unit_quats, vectors)
def test_quaternion_product_is_composition(a, b, v):
    direct = quat_rotate(quat_multiply(a, b), v)
    chained = quat_rotate(a, quat_rotate(b, v))
    assert np.allclose(direct, chained, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(unit_quats)
def test_matrix_quaternion_roundtrip(q):
    m = quat_to_matrix(q)
    assert np.allclose(m @ m.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(m) == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(quat_to_matrix(matrix_to_quat(m)), m, atol=1e-12)


def test_rotvec_quarter_turn():
    q = quat_from_rotvec((0.0, 0.0, math.pi / 2))
    assert np.allclose(quat_rotate(q, (1, 0, 0)), (0, 1, 0), atol=1e-15)
    assert quat_from_rotvec((0.0, 0.0, 0.0)) == (0.0, 0.0, 0.0, 1.0)


def test_euler_axes():
    # Compass yaw 90 looks East, pitch -90 looks straight down.
    assert np.allclose(euler_to_matrix(0, 0, 0)[:, 0], (0, 1, 0), atol=1e-15)
    assert np.allclose(euler_to_matrix(90, 0, 0)[:, 0], (1, 0, 0), atol=1e-15)
    assert np.allclose(euler_to_matrix(0, -90, 0)[:, 0], (0, 0, -1), atol=1e-15)
    # Positive roll lowers the right side, so the left (+y) axis rises.
    assert euler_to_matrix(0, 0, 30)[:, 1] @ (0, 0, 1) == pytest.approx(0.5, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 359.9), st.floats(-89, 89), st.floats(-45, 45))
def test_euler_roundtrip(yaw, pitch, roll):
    y, p, r = GimbalState.from_euler(yaw, pitch, roll).to_euler()
    assert (y - yaw + 180) % 360 - 180 == pytest.approx(0, abs=1e-9)
    assert p == pytest.approx(pitch, abs=1e-9)
    assert r == pytest.approx(roll, abs=1e-9)


def test_world_to_pixel_inverts_pixel_ray():
    g = GimbalState.from_quaternion(TABLE_Q)
    for px in [(960, 810), (0, 0), (1919.5, 1079.5), (123.25, 456.75)]:
        d = camera_ray_to_world(pixel_to_camera_ray(CAM, px), g)
        assert world_to_pixel(CAM, g, d) == pytest.approx(px, abs=1e-8)
    axis = camera_ray_to_world((0, 0, 1), g)
    assert world_to_pixel(CAM, g, -axis) is None


# --- stare ------------------------------------------------------------------


def test_stare_nadir():
    below = DRONE.with_altitude(100.0)
    cmd = stare_solution(DRONE, below)
    assert cmd.gimbal_pitch_deg == pytest.approx(-90.0, abs=1e-6)
    assert cmd.vehicle_yaw_deg == 0.0 and cmd.reachable
    assert not stare_solution(DRONE, below, GimbalLimits(pitch_min_deg=-80.0)).reachable


def test_stare_north_45_down():
    target = frame_at(DRONE).from_enu((0.0, 100.0, -100.0))
    cmd = stare_solution(DRONE, target)
    assert cmd.vehicle_yaw_deg == pytest.approx(0.0, abs=1e-9) or cmd.vehicle_yaw_deg == pytest.approx(360.0)
    assert cmd.gimbal_pitch_deg == pytest.approx(-45.0, abs=1e-9)
    assert cmd.gimbal_roll_deg == 0.0


def test_stare_rejects_bad_pairs():
    with pytest.raises(InvalidInputError):
        stare_solution(DRONE, DRONE)
    with pytest.raises(DatumMismatchError):
        stare_solution(DRONE, GeodeticPosition(36.2, -96.0, 150.0, Datum.AMSL))


def test_unreachable_command_clamps_pitch():
    above = frame_at(DRONE).from_enu((10.0, 0.0, 100.0))
    cmd = stare_solution(DRONE, above)
    assert not cmd.reachable
    assert cmd.gimbal_state(GimbalLimits()).to_euler()[1] == pytest.approx(30.0, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.floats(-2000, 2000), st.floats(-2000, 2000), st.floats(-500, 100))
def test_stare_loop_closure(e, n, u):
    if math.hypot(e, n, u) < 1.0:
        return
    f = frame_at(DRONE)
    target = f.from_enu((e, n, u))
    cmd = stare_solution(DRONE, target)
    d = camera_ray_to_world(pixel_to_camera_ray(CAM, CAM.center), cmd.gimbal_state())
    assert angle_deg(d, f.to_enu(target)) <= 0.01


def test_convention_record():
    assert CALIBRATED_CONVENTION.quat_order == "xyzw"
    assert CALIBRATED_CONVENTION.world == "ENU"
    assert "forward=+X" in CALIBRATED_CONVENTION.describe()
