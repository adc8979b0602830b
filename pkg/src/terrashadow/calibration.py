"""Frame-convention calibration against the reference geolocation case.

The reference case gives one raw gimbal quaternion and the ground point it
should produce. Nothing else pins down the quaternion component order,
its direction, the camera mount or the world frame, so every combination
is cast over flat terrain and the ones landing within tolerance are kept.
Exactly one must survive.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import TerrashadowError
from .geodesy import Datum, GeodeticPosition, haversine_m
from .geolocate import GeolocationResult, cast_ray
from .optics import CALIBRATED_CONVENTION, CameraModel, FrameConvention, pixel_to_camera_ray
from .terrain import TerrainGrid, TerrainKind, synth_terrain

MATCH_TOLERANCE_M = 0.5


@dataclass(frozen=True)
class ReferenceCase:
    drone: GeodeticPosition
    camera: CameraModel
    pixel: tuple[float, float]
    quaternion: tuple[float, float, float, float]
    expected: GeodeticPosition
    terrain_elevation_m: float


REFERENCE_CASE = ReferenceCase(
    drone=GeodeticPosition(36.212189, -96.006905, 195.0, Datum.ELLIPSOID_WGS84),
    camera=CameraModel(74.0, 1920, 1080),
    pixel=(960.0, 810.0),
    quaternion=(0.056115267, -0.0154703723, 0.9608545, 0.27086953),
    expected=GeodeticPosition(36.21290054231726, -96.0083389306795, 180.9964812024639, Datum.ELLIPSOID_WGS84),
    terrain_elevation_m=180.9964812024639,
)


def reference_terrain(case: ReferenceCase = REFERENCE_CASE, extent_m: float = 600.0) -> TerrainGrid:
    """Flat grid at the reference ground elevation centred on the drone."""
    return synth_terrain(
        TerrainKind.FLAT,
        center=(case.drone.latitude_deg, case.drone.longitude_deg),
        base_elevation_m=case.terrain_elevation_m,
        extent_m=extent_m,
        datum=case.drone.datum,
    )


def _proper_mounts():
    """The 24 axis-aligned proper rotations, as (right, down, forward) images."""
    axes = [tuple(int(v) for v in row) for row in np.vstack([np.eye(3), -np.eye(3)])]
    for right, down in itertools.permutations(axes, 2):
        if np.dot(right, down) != 0:
            continue
        fwd = tuple(int(v) for v in np.cross(right, down))
        yield (right, down, fwd)


def candidate_conventions() -> list[FrameConvention]:
    out = []
    for order, inverse, mount, world, offset in itertools.product(
        ("xyzw", "wxyz"), (False, True), list(_proper_mounts()), ("ENU", "NED"), (0.0, 0.5)
    ):
        out.append(FrameConvention(order, inverse, mount, world, offset))
    return out


@dataclass(frozen=True)
class CandidateResult:
    convention: FrameConvention
    result: GeolocationResult
    residual_m: float


@dataclass(frozen=True)
class CalibrationReport:
    candidates: tuple[CandidateResult, ...]
    matches: tuple[CandidateResult, ...]
    tolerance_m: float

    @property
    def selected(self) -> CandidateResult:
        if len(self.matches) != 1:
            raise TerrashadowError(
                f"frame calibration is ambiguous: {len(self.matches)} conventions within {self.tolerance_m} m"
            )
        return self.matches[0]


def evaluate(convention: FrameConvention, grid: TerrainGrid, case: ReferenceCase = REFERENCE_CASE) -> CandidateResult:
    ray = pixel_to_camera_ray(case.camera, case.pixel, convention.pixel_offset)
    d = convention.optical_to_enu(case.quaternion) @ ray
    res = cast_ray(grid, case.drone, d / np.linalg.norm(d))
    residual = haversine_m(res.hit, case.expected) if res.is_hit else float("inf")
    return CandidateResult(convention, res, residual)


def calibrate_frames(case: ReferenceCase = REFERENCE_CASE, tolerance_m: float = MATCH_TOLERANCE_M) -> CalibrationReport:
    grid = reference_terrain(case)
    results = tuple(evaluate(c, grid, case) for c in candidate_conventions())
    matches = tuple(r for r in results if r.residual_m <= tolerance_m)
    return CalibrationReport(results, matches, tolerance_m)


def check_calibrated_convention() -> CandidateResult:
    """Run the calibration and confirm the library's locked-in convention."""
    sel = calibrate_frames().selected
    if sel.convention != CALIBRATED_CONVENTION:
        raise TerrashadowError(f"calibration selected {sel.convention.describe()}, library uses {CALIBRATED_CONVENTION.describe()}")
    return sel
