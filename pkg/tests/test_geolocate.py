import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from terrashadow.errors import DatumMismatchError, InvalidInputError
from terrashadow.geodesy import Datum, GeodeticPosition, degrees_per_meter, haversine_m
from terrashadow.geolocate import (
    GeolocationStatus,
    VehicleState,
    bbox_center,
    cast_ray,
    geolocate_detection,
    geolocate_pixel,
    traverse_lattice,
)
from terrashadow.optics import CameraModel, GimbalState, stare_solution
from terrashadow.terrain import build_grid, elevation_at, synth_terrain

CAM = CameraModel(74.0, 1920, 1080)
TABLE_Q = (0.056115267, -0.0154703723, 0.9608545, 0.27086953)
TABLE_ELEV = 180.9964812024639
EXPECTED = GeodeticPosition(36.21290054231726, -96.0083389306795, TABLE_ELEV)
DRONE = GeodeticPosition(36.212189, -96.006905, 195.0)


def flat(elev, center=(36.212189, -96.006905), extent_m=1000.0, cell=1e-4):
    return synth_terrain("FLAT", center=center, extent_m=extent_m, cell_size_deg=cell, base_elevation_m=elev)


@pytest.fixture(scope="module")
def table_grid():
    return flat(TABLE_ELEV)


@pytest.fixture(scope="module")
def peaks():
    return synth_terrain("PEAKS", extent_m=800.0, seed=4)


def table_state():
    return VehicleState(DRONE, GimbalState.from_quaternion(TABLE_Q))


def test_nadir_ray(table_grid):
    g = flat(181.0)
    r = cast_ray(g, DRONE, (0.0, 0.0, -1.0))
    assert r.status is GeolocationStatus.HIT and r.is_hit
    assert r.ray_length_m == pytest.approx(14.0, abs=1e-9)
    assert r.hit.latitude_deg == DRONE.latitude_deg and r.hit.longitude_deg == DRONE.longitude_deg
    assert r.hit.altitude_m == pytest.approx(181.0, abs=1e-9)


def test_horizontal_ray_leaves_region():
    r = cast_ray(flat(181.0), DRONE, (1.0, 0.0, 0.0), trace=True)
    assert r.status is GeolocationStatus.MISS_OUT_OF_REGION and r.hit is None


def test_upward_ray_is_above_horizon():
    r = cast_ray(flat(181.0), DRONE, (0.0, 0.6, 0.8))
    assert r.status is GeolocationStatus.MISS_ABOVE_HORIZON


def test_origin_outside_region_can_still_hit():
    g = flat(181.0, extent_m=200.0)
    k_lat, _ = degrees_per_meter(DRONE.latitude_deg)
    south = GeodeticPosition(DRONE.latitude_deg - 300 * k_lat, DRONE.longitude_deg, 281.0)
    d = np.array([0.0, 1.0, -1.0 / 3.0])
    r = cast_ray(g, south, d / np.linalg.norm(d))
    assert r.is_hit and r.hit_enu[1] == pytest.approx(300.0, abs=1e-6)
    d = np.array([0.0, 1.0, -1.0])
    assert cast_ray(g, south, d / np.linalg.norm(d)).status is GeolocationStatus.MISS_OUT_OF_REGION


def test_origin_below_terrain():
    r = cast_ray(flat(200.0), DRONE, (0.0, 0.0, -1.0))
    assert r.status is GeolocationStatus.ORIGIN_BELOW_TERRAIN


def test_max_range_forces_miss():
    g = flat(181.0)
    d = np.array([0.0, 1.0, -0.01])
    assert cast_ray(g, DRONE, d / np.linalg.norm(d), max_range_m=100.0).status is GeolocationStatus.MISS_OUT_OF_REGION


def test_bad_direction_and_datum():
    g = flat(181.0)
    with pytest.raises(InvalidInputError):
        cast_ray(g, DRONE, (0.0, 0.0, -2.0))
    with pytest.raises(InvalidInputError):
        cast_ray(g, DRONE, (0.0, math.nan, -1.0))
    with pytest.raises(DatumMismatchError):
        cast_ray(g, GeodeticPosition(36.212189, -96.006905, 195.0, Datum.AMSL), (0.0, 0.0, -1.0))


def test_plane_oracle_500_rays():
    g = flat(250.0, extent_m=5000.0)
    rng = np.random.default_rng(31)
    k_lat, k_lon = degrees_per_meter(DRONE.latitude_deg)
    worst = 0.0
    for _ in range(500):
        e0, n0 = rng.uniform(-1000, 1000, 2)
        origin = GeodeticPosition(DRONE.latitude_deg + n0 * k_lat, DRONE.longitude_deg + e0 * k_lon, 250.0 + rng.uniform(1, 300))
        az = rng.uniform(0, 2 * np.pi)
        dep = math.radians(rng.uniform(15, 90))
        d = np.array([math.cos(dep) * math.sin(az), math.cos(dep) * math.cos(az), -math.sin(dep)])
        r = cast_ray(g, origin, d)
        assert r.is_hit
        t = (250.0 - origin.altitude_m) / d[2]
        worst = max(worst, float(np.max(np.abs(np.array(r.hit_enu) - t * d))))
    assert worst <= 1e-6


@pytest.mark.parametrize("seed", range(3))
def test_downward_rays_monotone(seed):
    g = flat(181.0)
    az = np.random.default_rng(seed).uniform(0, 2 * np.pi)
    lengths = []
    for dep in np.linspace(10, 90, 30):
        a = math.radians(dep)
        d = (math.cos(a) * math.sin(az), math.cos(a) * math.cos(az), -math.sin(a))
        lengths.append(cast_ray(g, DRONE, d).ray_length_m)
    assert all(b < a for a, b in zip(lengths, lengths[1:]))


def test_hits_lie_on_bilinear_surface(peaks):
    rng = np.random.default_rng(32)
    hits = 0
    for _ in range(300):
        lat = rng.uniform(peaks.region[0], peaks.region[2])
        lon = rng.uniform(peaks.region[1], peaks.region[3])
        origin = GeodeticPosition(lat, lon, peaks.max_elevation + rng.uniform(5, 150))
        az, dep = rng.uniform(0, 2 * np.pi), math.radians(rng.uniform(5, 90))
        d = (math.cos(dep) * math.sin(az), math.cos(dep) * math.cos(az), -math.sin(dep))
        r = cast_ray(peaks, origin, d)
        if r.is_hit:
            hits += 1
            z = elevation_at(peaks, r.hit.latitude_deg, r.hit.longitude_deg, "BILINEAR")
            assert abs(z - r.hit.altitude_m) <= 1e-3
    assert hits > 200


def test_first_hit_along_ray(peaks):
    # Dense march along the ray: no sample before the hit is below the surface.
    rng = np.random.default_rng(33)
    for _ in range(40):
        lat = rng.uniform(peaks.region[0], peaks.region[2])
        lon = rng.uniform(peaks.region[1], peaks.region[3])
        origin = GeodeticPosition(lat, lon, peaks.max_elevation + 2.0)
        az, dep = rng.uniform(0, 2 * np.pi), math.radians(rng.uniform(2, 20))
        d = np.array([math.cos(dep) * math.sin(az), math.cos(dep) * math.cos(az), -math.sin(dep)])
        r = cast_ray(peaks, origin, d)
        if not r.is_hit:
            continue
        k_lat, k_lon = degrees_per_meter(lat, origin.altitude_m)
        for t in np.linspace(0, r.ray_length_m, 400)[:-1]:
            u, v = peaks.grid_coords(lat + d[1] * t * k_lat, lon + d[0] * t * k_lon)
            assert origin.altitude_m + d[2] * t >= peaks.bilinear_at_coords(u, v) - 1e-6


def test_determinism(peaks):
    d = np.array([0.3, 0.4, -0.5])
    d /= np.linalg.norm(d)
    origin = GeodeticPosition(36.2121, -96.0069, peaks.max_elevation + 30)
    a, b = cast_ray(peaks, origin, d, trace=True), cast_ray(peaks, origin, d, trace=True)
    assert a == b


def _dense_cells(u0, v0, du, dv, t0, t1, i_bounds, j_bounds, n=20000):
    cells = set()
    for t in np.linspace(t0, t1, n):
        u, v = u0 + du * t, v0 + dv * t
        # Skip samples sitting on a lattice line: either neighbour is fine there.
        if abs(u - round(u)) < 1e-9 or abs(v - round(v)) < 1e-9:
            continue
        i, j = math.floor(u), math.floor(v)
        if i_bounds[0] <= i <= i_bounds[1] and j_bounds[0] <= j <= j_bounds[1]:
            cells.add((i, j))
    return cells


@settings(max_examples=150, deadline=None)
@given(
    st.floats(-1, 20), st.floats(-1, 20), st.floats(-1, 1), st.floats(-1, 1), st.floats(0.5, 30)
)
def test_lattice_walk_covers_segment(u0, v0, du, dv, t1):
    bounds = (-1, 19)
    walk = list(traverse_lattice(u0, v0, du, dv, 0.0, t1, bounds, bounds))
    visited = {(i, j) for i, j, _, _ in walk}
    # A segment that leaves the bounds is cut there, so only audit up to the exit.
    t_end = t1
    for p0, dp in ((u0, du), (v0, dv)):
        if dp:
            t_end = min(t_end, ((bounds[1] + 1 - p0) if dp > 0 else (bounds[0] - p0)) / dp)
    if t_end > 0:
        assert _dense_cells(u0, v0, du, dv, 0.0, t_end, bounds, bounds, n=4000) <= visited
    # Consecutive steps are 4-connected and parameter intervals are contiguous.
    for (i, j, _, tb), (k, l, ta, _) in zip(walk, walk[1:]):
        assert abs(i - k) + abs(j - l) == 1 and ta == tb


def test_cast_ray_visits_every_crossed_patch():
    # One tall cell widens the height band so the whole footprint is walked.
    base = flat(100.0, extent_m=400.0)
    corner = (base.lat0 + base.dlat, base.lon0 + base.dlon)
    g = build_grid(base.region, base.cell_size_deg,
                   lambda lat, lon: 300.0 if lat < corner[0] and lon < corner[1] else 100.0)
    assert g.elevation[0, 0] == 300.0 and g.elevation[1, 1] == 100.0
    origin = DRONE.with_altitude(150.0)
    rng = np.random.default_rng(34)
    for _ in range(100):
        az = rng.uniform(0, 2 * np.pi)
        d = np.array([math.sin(az), math.cos(az), -1e-4])
        d /= np.linalg.norm(d)
        r = cast_ray(g, origin, d, trace=True)
        k_lat, k_lon = degrees_per_meter(origin.latitude_deg, origin.altitude_m)
        u0, v0 = g.grid_coords(origin.latitude_deg, origin.longitude_deg)
        du, dv = d[1] * k_lat / g.dlat, d[0] * k_lon / g.dlon
        # Parameter where the footprint leaves the region slab.
        t_end = min(
            ((g.rows - 0.5 - u0) / du if du > 0 else (-0.5 - u0) / du) if du else math.inf,
            ((g.cols - 0.5 - v0) / dv if dv > 0 else (-0.5 - v0) / dv) if dv else math.inf,
        )
        if r.is_hit:
            t_end = r.ray_length_m
        expected = _dense_cells(u0, v0, du, dv, 0.0, t_end * (1 - 1e-9), (-1, g.rows - 1), (-1, g.cols - 1), n=3000)
        assert expected <= set(r.visited)


# --- pixels and detections ------------------------------------------------------


def test_table_reference(table_grid):
    r = geolocate_pixel(table_grid, table_state(), CAM, (960, 810))
    assert r.is_hit
    assert haversine_m(r.hit, EXPECTED) <= 0.5
    assert abs(r.hit.altitude_m - TABLE_ELEV) <= 1e-3


def test_top_edge_level_camera_misses(table_grid):
    state = VehicleState(DRONE, GimbalState.from_euler(30.0, 0.0))
    r = geolocate_pixel(table_grid, state, CAM, (960, 0))
    assert r.status is GeolocationStatus.MISS_ABOVE_HORIZON


def test_stare_center_roundtrip():
    g = flat(274.0, extent_m=1200.0, cell=1e-4)
    rng = np.random.default_rng(35)
    k_lat, k_lon = degrees_per_meter(DRONE.latitude_deg)
    tol = max(0.1, 1e-4 / k_lat / 10)
    for _ in range(50):
        drone = GeodeticPosition(DRONE.latitude_deg, DRONE.longitude_deg, 274.0 + rng.uniform(20, 120))
        e, n = rng.uniform(-400, 400, 2)
        target = GeodeticPosition(DRONE.latitude_deg + n * k_lat, DRONE.longitude_deg + e * k_lon, 274.0)
        cmd = stare_solution(drone, target)
        r = geolocate_pixel(g, VehicleState(drone, cmd.gimbal_state()), CAM, CAM.center)
        assert r.is_hit and haversine_m(r.hit, target) <= tol


def test_bbox_center_rules():
    assert bbox_center(CAM, (0, 0, 1920, 1080)) == (960.0, 540.0)
    for bad in [(10, 10, 10, 20), (20, 10, 10, 20), (-1, 0, 10, 10), (0, 0, 1921, 10)]:
        with pytest.raises(InvalidInputError):
            bbox_center(CAM, bad)


def test_full_frame_bbox_equals_center(table_grid):
    s = table_state()
    assert geolocate_detection(table_grid, s, CAM, (0, 0, 1920, 1080)) == geolocate_pixel(table_grid, s, CAM, (960, 540))


def test_single_pixel_bbox_reproduces_table(table_grid):
    s = table_state()
    ref = geolocate_pixel(table_grid, s, CAM, (960, 810))
    # Integer pixel coordinates are centres, so the box is centred on them.
    assert geolocate_detection(table_grid, s, CAM, (959.5, 809.5, 960.5, 810.5)) == ref
    corner = geolocate_detection(table_grid, s, CAM, (960, 810, 961, 811))
    assert corner == geolocate_pixel(table_grid, s, CAM, (960.5, 810.5))


def test_lower_bbox_lands_closer(table_grid):
    s = table_state()
    ranges = []
    # The reference camera is pitched up: rows above ~650 look past the horizon.
    for y in (700, 780, 860, 940, 1020):
        r = geolocate_detection(table_grid, s, CAM, (940, y, 980, y + 40))
        ranges.append(math.hypot(r.hit_enu[0], r.hit_enu[1]))
    assert all(b < a for a, b in zip(ranges, ranges[1:]))


def test_result_to_dict(table_grid):
    d = geolocate_pixel(table_grid, table_state(), CAM, (960, 810)).to_dict()
    assert d["status"] == "HIT" and d["hit"]["datum"] == "ELLIPSOID_WGS84"
    miss = cast_ray(table_grid, DRONE, (0.0, 0.0, 1.0)).to_dict()
    assert miss["hit"] is None and miss["ray_length_m"] is None
