"""Pinhole camera, gimbal orientation and the stare-point solver.

Frames
------
Optical frame: +x image right, +y image down, +z along the optical axis.
Body frame: forward-left-up (FLU); the camera looks along body +x, image
right is body -y and image down is body -z.
World frame: local East-North-Up at the vehicle.

Gimbal quaternions are ``(x, y, z, w)`` with the scalar last and rotate
body vectors into ENU. Pixel coordinates are measured from the top-left
corner with no half-pixel shift, so pixel ``(W/2, H/2)`` is the optical
axis. This combination is the single candidate that reproduces the
reference geolocation fixture (see :mod:`terrashadow.calibration`).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import DatumMismatchError, InvalidInputError
from .geodesy import GeodeticPosition, TangentFrame

QUAT_NORM_TOL = 1e-6


@dataclass(frozen=True)
class CameraModel:
    fov_h_deg: float
    width_px: int
    height_px: int

    def __post_init__(self):
        if not 0.0 < self.fov_h_deg < 180.0:
            raise InvalidInputError(f"horizontal FOV {self.fov_h_deg} outside (0, 180)")
        if int(self.width_px) <= 0 or int(self.height_px) <= 0:
            raise InvalidInputError("image resolution must be positive")
        object.__setattr__(self, "width_px", int(self.width_px))
        object.__setattr__(self, "height_px", int(self.height_px))

    @property
    def focal_px(self) -> float:
        return (self.width_px / 2.0) / math.tan(math.radians(self.fov_h_deg) / 2.0)

    @property
    def fov_v_deg(self) -> float:
        return math.degrees(2.0 * math.atan((self.height_px / 2.0) / self.focal_px))

    @property
    def center(self) -> tuple[float, float]:
        return (self.width_px / 2.0, self.height_px / 2.0)


# --- quaternions (x, y, z, w) -----------------------------------------------


def quat_normalize(q: Sequence[float]) -> tuple[float, float, float, float]:
    x, y, z, w = (float(c) for c in q)
    n = math.sqrt(x * x + y * y + z * z + w * w)
    if n == 0.0 or not math.isfinite(n):
        raise InvalidInputError("quaternion has zero or non-finite norm")
    return (x / n, y / n, z / n, w / n)


def quat_conjugate(q):
    x, y, z, w = q
    return (-x, -y, -z, w)


def quat_multiply(a, b):
    ax, ay, az, aw = a
    bx, by, bz, bw = b
    return (
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
        aw * bw - ax * bx - ay * by - az * bz,
    )


def quat_to_matrix(q) -> np.ndarray:
    x, y, z, w = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(m: np.ndarray) -> tuple[float, float, float, float]:
    """Shepperd's method; returns the quaternion with w >= 0."""
    m = np.asarray(m, dtype=float)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = 2.0 * math.sqrt(1.0 + tr)
        q = ((m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s, 0.25 * s)
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = 2.0 * math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
        q = (0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s, (m[2, 1] - m[1, 2]) / s)
    elif m[1, 1] > m[2, 2]:
        s = 2.0 * math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
        q = ((m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s, (m[0, 2] - m[2, 0]) / s)
    else:
        s = 2.0 * math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
        q = ((m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s, (m[1, 0] - m[0, 1]) / s)
    q = quat_normalize(q)
    if q[3] < 0:
        q = tuple(-c for c in q)
    return q


def quat_rotate(q, v) -> np.ndarray:
    return quat_to_matrix(q) @ np.asarray(v, dtype=float)


def quat_from_rotvec(rv: Sequence[float]) -> tuple[float, float, float, float]:
    rx, ry, rz = (float(c) for c in rv)
    angle = math.sqrt(rx * rx + ry * ry + rz * rz)
    if angle == 0.0:
        return (0.0, 0.0, 0.0, 1.0)
    s = math.sin(angle / 2.0) / angle
    return (rx * s, ry * s, rz * s, math.cos(angle / 2.0))


def _rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _rot_y(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def _rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def euler_to_matrix(yaw_deg: float, pitch_deg: float, roll_deg: float) -> np.ndarray:
    """Body(FLU)->ENU rotation for compass yaw, pitch (up positive) and roll (right-down positive)."""
    return (
        _rot_z(math.radians(90.0 - yaw_deg))
        @ _rot_y(-math.radians(pitch_deg))
        @ _rot_x(math.radians(roll_deg))
    )


def matrix_to_euler(m: np.ndarray) -> tuple[float, float, float]:
    fwd = m[:, 0]
    pitch = math.degrees(math.asin(max(-1.0, min(1.0, fwd[2]))))
    yaw = math.degrees(math.atan2(fwd[0], fwd[1])) % 360.0
    roll = math.degrees(math.atan2(m[2, 1], m[2, 2]))
    return yaw, pitch, roll


# --- frame conventions -------------------------------------------------------

# ENU <- NED: swap the horizontal axes and flip vertical.
_NED_TO_ENU = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0]])


@dataclass(frozen=True)
class FrameConvention:
    """How a raw gimbal quaternion and pixel map onto an ENU view ray.

    Attributes:
        quat_order: "xyzw" (scalar last) or "wxyz" (scalar first).
        inverse: True if the quaternion rotates world vectors into the body.
        mount: body-frame images of the optical x (right), y (down) and
            z (forward) axes.
        world: "ENU" or "NED", the frame the quaternion rotates into.
        pixel_offset: added to pixel coordinates before centring (0.5
            treats integer coordinates as pixel corners).
    """

    quat_order: str
    inverse: bool
    mount: tuple[tuple[int, int, int], tuple[int, int, int], tuple[int, int, int]]
    world: str
    pixel_offset: float

    @cached_property
    def mount_matrix(self) -> np.ndarray:
        return np.array(self.mount, dtype=float).T

    def body_to_enu(self, raw_q: Sequence[float]) -> np.ndarray:
        a, b, c, d = (float(v) for v in raw_q)
        q = (a, b, c, d) if self.quat_order == "xyzw" else (b, c, d, a)
        q = quat_normalize(q)
        if self.inverse:
            q = quat_conjugate(q)
        m = quat_to_matrix(q)
        if self.world == "NED":
            m = _NED_TO_ENU @ m
        return m

    def optical_to_enu(self, raw_q: Sequence[float]) -> np.ndarray:
        return self.body_to_enu(raw_q) @ self.mount_matrix

    def describe(self) -> str:
        axes = {(1, 0, 0): "+X", (-1, 0, 0): "-X", (0, 1, 0): "+Y", (0, -1, 0): "-Y", (0, 0, 1): "+Z", (0, 0, -1): "-Z"}
        right, down, fwd = (axes[tuple(a)] for a in self.mount)
        return (
            f"quaternion {self.quat_order}{' (inverted)' if self.inverse else ''} body->{self.world}; "
            f"camera forward={fwd} right={right} down={down}; pixel offset {self.pixel_offset}"
        )


CALIBRATED_CONVENTION = FrameConvention(
    quat_order="xyzw",
    inverse=False,
    mount=((0, -1, 0), (0, 0, -1), (1, 0, 0)),
    world="ENU",
    pixel_offset=0.0,
)


# --- gimbal state -------------------------------------------------------------


class GimbalSource(str, enum.Enum):
    QUATERNION = "QUATERNION"
    EULER = "EULER"


@dataclass(frozen=True)
class GimbalState:
    """Camera orientation as a unit (x, y, z, w) quaternion, body(FLU) -> ENU."""

    orientation_q: tuple[float, float, float, float]
    source: GimbalSource = GimbalSource.QUATERNION
    euler_deg: tuple[float, float, float] | None = None

    def __post_init__(self):
        q = tuple(float(c) for c in self.orientation_q)
        if len(q) != 4:
            raise InvalidInputError("quaternion needs four components")
        n = math.sqrt(sum(c * c for c in q))
        if abs(n - 1.0) > QUAT_NORM_TOL:
            raise InvalidInputError(f"quaternion norm {n:.9f} is not unit within {QUAT_NORM_TOL}")
        object.__setattr__(self, "orientation_q", quat_normalize(q))

    @classmethod
    def from_quaternion(cls, q: Sequence[float], convention: FrameConvention = CALIBRATED_CONVENTION) -> "GimbalState":
        if convention == CALIBRATED_CONVENTION:
            return cls(tuple(float(c) for c in q), GimbalSource.QUATERNION)
        body = convention.optical_to_enu(q) @ CALIBRATED_CONVENTION.mount_matrix.T
        return cls(matrix_to_quat(body), GimbalSource.QUATERNION)

    @classmethod
    def from_euler(cls, vehicle_yaw_deg: float, gimbal_pitch_deg: float, gimbal_roll_deg: float = 0.0) -> "GimbalState":
        m = euler_to_matrix(vehicle_yaw_deg, gimbal_pitch_deg, gimbal_roll_deg)
        return cls(matrix_to_quat(m), GimbalSource.EULER, (vehicle_yaw_deg, gimbal_pitch_deg, gimbal_roll_deg))

    @cached_property
    def matrix(self) -> np.ndarray:
        m = quat_to_matrix(self.orientation_q)
        m.setflags(write=False)
        return m

    def to_euler(self) -> tuple[float, float, float]:
        """(vehicle yaw, gimbal pitch, gimbal roll) in degrees."""
        return matrix_to_euler(self.matrix)

    @property
    def yaw_deg(self) -> float:
        return self.to_euler()[0]

    def compose(self, body_rotation_q) -> "GimbalState":
        """Apply an extra rotation expressed in the body frame."""
        return GimbalState(quat_normalize(quat_multiply(self.orientation_q, body_rotation_q)), self.source)


IDENTITY_GIMBAL = GimbalState((0.0, 0.0, 0.0, 1.0))


# --- rays -----------------------------------------------------------------------


def pixel_to_camera_ray(cam: CameraModel, px: Sequence[float], pixel_offset: float = CALIBRATED_CONVENTION.pixel_offset) -> np.ndarray:
    """Unit optical-frame ray through pixel ``(x, y)`` (top-left origin)."""
    x, y = float(px[0]), float(px[1])
    if not (0.0 <= x < cam.width_px and 0.0 <= y < cam.height_px):
        raise InvalidInputError(f"pixel ({x}, {y}) outside {cam.width_px}x{cam.height_px} frame")
    f = cam.focal_px
    v = np.array([(x + pixel_offset - cam.width_px / 2.0) / f, (y + pixel_offset - cam.height_px / 2.0) / f, 1.0])
    return v / np.linalg.norm(v)


def camera_ray_to_world(ray_cam: Sequence[float], g: GimbalState) -> np.ndarray:
    """Rotate an optical-frame ray into a unit ENU direction."""
    r = np.asarray(ray_cam, dtype=float)
    n = float(np.linalg.norm(r))
    if not math.isfinite(n) or abs(n - 1.0) > 1e-9:
        raise InvalidInputError("camera ray must be a unit vector")
    w = g.matrix @ (CALIBRATED_CONVENTION.mount_matrix @ r)
    return w / np.linalg.norm(w)


def world_to_pixel(cam: CameraModel, g: GimbalState, dir_enu: Sequence[float]) -> tuple[float, float] | None:
    """Project an ENU direction into the image; None if behind the camera or off-frame."""
    opt = CALIBRATED_CONVENTION.mount_matrix.T @ (g.matrix.T @ np.asarray(dir_enu, dtype=float))
    if opt[2] <= 0:
        return None
    f = cam.focal_px
    off = CALIBRATED_CONVENTION.pixel_offset
    x = f * opt[0] / opt[2] + cam.width_px / 2.0 - off
    y = f * opt[1] / opt[2] + cam.height_px / 2.0 - off
    # Round-off can push an edge pixel a hair outside the frame.
    x, y = (0.0 if -1e-9 < c < 0.0 else c for c in (x, y))
    if not (0.0 <= x < cam.width_px and 0.0 <= y < cam.height_px):
        return None
    return (float(x), float(y))


# --- stare point -------------------------------------------------------------------


@dataclass(frozen=True)
class GimbalLimits:
    pitch_min_deg: float = -120.0
    pitch_max_deg: float = 30.0
    roll_min_deg: float = -45.0
    roll_max_deg: float = 45.0

    def pitch_ok(self, pitch_deg: float) -> bool:
        return self.pitch_min_deg <= pitch_deg <= self.pitch_max_deg


DEFAULT_LIMITS = GimbalLimits()


@dataclass(frozen=True)
class StareCommand:
    vehicle_yaw_deg: float
    gimbal_pitch_deg: float
    gimbal_roll_deg: float
    reachable: bool

    def gimbal_state(self, limits: GimbalLimits | None = None) -> GimbalState:
        """Orientation that executes the command, pitch clamped to ``limits`` if given."""
        pitch = self.gimbal_pitch_deg
        if limits is not None:
            pitch = min(max(pitch, limits.pitch_min_deg), limits.pitch_max_deg)
        return GimbalState.from_euler(self.vehicle_yaw_deg, pitch, self.gimbal_roll_deg)


def stare_solution(drone: GeodeticPosition, target: GeodeticPosition, limits: GimbalLimits = DEFAULT_LIMITS) -> StareCommand:
    """Vehicle yaw and gimbal pitch that centre ``target`` in the frame.

    Yaw comes from the vehicle (the gimbal has pitch and roll only), so the
    command is always level in roll.
    """
    if drone.datum is not target.datum:
        raise DatumMismatchError(f"drone is {drone.datum.value}, target is {target.datum.value}")
    e, n, u = TangentFrame.at(drone).to_enu(target)
    horiz = math.hypot(e, n)
    if horiz < 1e-9 and abs(u) < 1e-9:
        raise InvalidInputError("drone and target coincide")
    yaw = 0.0 if horiz < 1e-6 else math.degrees(math.atan2(e, n)) % 360.0
    pitch = math.degrees(math.atan2(u, horiz))
    return StareCommand(yaw, pitch, 0.0, limits.pitch_ok(pitch))
