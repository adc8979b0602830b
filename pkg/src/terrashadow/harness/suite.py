"""Builtin scenarios and the self-check suite mapped onto the challenge taxonomy."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..calibration import check_calibrated_convention
from ..geodesy import GeodeticPosition, TangentFrame, haversine_m
from ..geolocate import VehicleState, cast_ray, geolocate_detection, geolocate_pixel
from ..optics import CameraModel, GimbalState
from ..terrain import DEFAULT_CENTER, TerrainKind, synth_surface, synth_terrain
from ..uncertainty import NoiseModel, Scene, monte_carlo_geolocation
from .bus import BusConfig
from .scenario import ScenarioReport, run_scenario, scenario_from_dict
from .taxonomy import TestTag, TaxonomyReport, taxonomy_report

GROUND_M = 274.0


def _lla(p: GeodeticPosition) -> list:
    return [p.latitude_deg, p.longitude_deg, p.altitude_m, p.datum.value]


def _offset(origin: GeodeticPosition, e: float, n: float, u: float) -> GeodeticPosition:
    return TangentFrame.at(origin).from_enu((e, n, u))


def collaborative_detection_doc(
    *,
    noise: dict | str | None = None,
    bus: BusConfig = BusConfig(latency_mean_s=0.2, jitter_s=0.1),
    seed: int = 0,
    expect_delivery: bool = True,
) -> dict:
    """One vehicle spots a person, shares the fix, and both turn to face it.

    The bus parameters are placeholders, not measured values.
    """
    person = GeodeticPosition(DEFAULT_CENTER[0], DEFAULT_CENTER[1], GROUND_M)
    finder = _offset(person, 0.0, -60.0, 60.0)
    helper = _offset(person, 90.0, 40.0, 50.0)
    script = [
        {"t": 1.0, "type": "detect_at_pixel", "agent": "finder", "label": "person", "truth": _lla(person)},
        {"t": 1.0, "type": "stare_at", "agent": "finder", "target": "detection:person"},
        {"t": 1.5, "type": "publish_geolocation", "agent": "finder", "label": "person"},
        {"t": 5.0, "type": "assert", "check": "heading_to", "agent": "finder", "target": _lla(person), "tolerance_deg": 0.5},
    ]
    if expect_delivery:
        script += [
            {"t": 5.0, "type": "assert", "check": "received", "agent": "helper", "label": "person"},
            {"t": 5.0, "type": "assert", "check": "heading_to", "agent": "helper", "target": _lla(person), "tolerance_deg": 0.5},
        ]
    else:
        script += [
            {"t": 5.0, "type": "assert", "check": "reoriented", "agent": "helper", "expected": False},
            {"t": 5.0, "type": "assert", "check": "bus", "field": "dropped", "op": "==", "value": 1},
        ]
    return {
        "version": 1,
        "name": "collaborative-detection",
        "seed": seed,
        "tags": {"level": "SYSTEM", "fidelity": "SIL", "complexity": "MODERATE", "challenges": ["C3", "C7"]},
        "terrain": {"kind": "FLAT", "params": {"base_elevation_m": GROUND_M}},
        "bus": bus.to_dict(),
        "duration_s": 6.0,
        "agents": [
            {"id": "finder", "position": _lla(finder), "attitude": {"yaw": 20.0, "pitch": -45.0}, "noise": noise},
            {"id": "helper", "position": _lla(helper), "attitude": {"yaw": 90.0, "pitch": -45.0}, "noise": noise},
        ],
        "script": script,
    }


def message_burst_doc(n_messages: int, drop_probability: float, seed: int) -> dict:
    """``n_messages`` publications of one fix over a lossy link."""
    person = GeodeticPosition(DEFAULT_CENTER[0], DEFAULT_CENTER[1], GROUND_M)
    finder = _offset(person, 0.0, -60.0, 60.0)
    script = [{"t": 0.0, "type": "detect_at_pixel", "agent": "finder", "label": "person", "pixel": [960, 540]}]
    script += [
        {"t": 0.1 * (k + 1), "type": "publish_geolocation", "agent": "finder", "label": "person"}
        for k in range(n_messages)
    ]
    return {
        "version": 1,
        "name": "message-burst",
        "seed": seed,
        "tags": {"level": "INTEGRATION", "complexity": "EDGE", "challenges": ["C7"]},
        "terrain": {"kind": "FLAT", "params": {"base_elevation_m": GROUND_M}},
        "bus": {"latency_mean_s": 0.05, "jitter_s": 0.02, "drop_probability": drop_probability},
        "duration_s": 0.1 * n_messages + 1.0,
        "agents": [
            {"id": "finder", "position": _lla(finder), "attitude": {"yaw": 0.0, "pitch": -45.0}},
            {"id": "helper", "position": _lla(_offset(person, 50.0, 0.0, 50.0)), "attitude": {"yaw": 0.0, "pitch": -45.0}},
        ],
        "script": script,
    }


def reordering_doc() -> dict:
    """Two fixes whose messages arrive in reverse order; the older must lose."""
    person = GeodeticPosition(DEFAULT_CENTER[0], DEFAULT_CENTER[1], GROUND_M)
    finder = _offset(person, 0.0, -60.0, 60.0)
    helper = _offset(person, 80.0, 0.0, 50.0)
    moved_target = _offset(person, 20.0, 0.0, 0.0)
    return {
        "version": 1,
        "name": "reordered-fixes",
        "seed": 0,
        "tags": {"level": "INTEGRATION", "complexity": "EDGE", "challenges": ["C7"]},
        "terrain": {"kind": "FLAT", "params": {"base_elevation_m": GROUND_M}},
        "duration_s": 5.0,
        "agents": [
            {"id": "finder", "position": _lla(finder), "attitude": {"yaw": 0.0, "pitch": -45.0}},
            {"id": "helper", "position": _lla(helper), "attitude": {"yaw": 0.0, "pitch": -45.0}},
        ],
        "script": [
            {"t": 1.0, "type": "detect_at_pixel", "agent": "finder", "label": "person", "truth": _lla(person)},
            {"t": 1.0, "type": "publish_geolocation", "agent": "finder", "label": "person", "latency_override_s": 2.0},
            {"t": 2.0, "type": "detect_at_pixel", "agent": "finder", "label": "person", "truth": _lla(moved_target)},
            {"t": 2.0, "type": "publish_geolocation", "agent": "finder", "label": "person", "latency_override_s": 0.1},
            {"t": 4.0, "type": "assert", "check": "heading_to", "agent": "helper", "target": _lla(moved_target), "tolerance_deg": 0.5},
            {"t": 4.0, "type": "assert", "check": "bus", "field": "reordered", "op": "==", "value": 1},
        ],
    }


def run_collaborative(**kw) -> ScenarioReport:
    return run_scenario(scenario_from_dict(collaborative_detection_doc(**kw)))


# --- builtin checks ------------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    tag: TestTag
    passed: bool
    detail: str


@dataclass(frozen=True)
class BuiltinCheck:
    name: str
    tag: TestTag
    fn: Callable[[], tuple[bool, str]]

    def run(self) -> CheckResult:
        try:
            ok, detail = self.fn()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        return CheckResult(self.name, self.tag, bool(ok), detail)


_CAM = CameraModel(74.0, 1920, 1080)


def _check_ridge_undersampling():
    # The default crest sits between two centroid columns of the coarse grid;
    # a 10x finer grid over the same analytic ridge recovers most of it.
    coarse_surface = synth_surface(TerrainKind.RIDGE, height_m=10.0, half_width_m=3.0, extent_m=200.0)
    coarse = synth_terrain(TerrainKind.RIDGE, coarse_surface.params)
    fine = synth_terrain(TerrainKind.RIDGE, coarse_surface.params, cell_size_deg=1e-5)
    seen_coarse = coarse.max_elevation - GROUND_M
    seen_fine = fine.max_elevation - GROUND_M
    ok = seen_coarse < 5.0 and seen_fine > 8.0
    return ok, f"ridge of 10 m appears as {seen_coarse:.2f} m on the coarse grid, {seen_fine:.2f} m on the fine grid"


def _check_gully_smoothing():
    # Ray into a trench: compare the grid hit with the hit on the analytic surface.
    surf = synth_surface(TerrainKind.GULLY, depth_m=6.0, width_m=12.0, extent_m=300.0)
    grid = synth_terrain(TerrainKind.GULLY, depth_m=6.0, width_m=12.0, extent_m=300.0)
    origin = GeodeticPosition(DEFAULT_CENTER[0], DEFAULT_CENTER[1] - 0.0004, GROUND_M + 40.0)
    d = np.array([math.cos(math.radians(40)), 0.0, -math.sin(math.radians(40))])
    res = cast_ray(grid, origin, d)
    frame = TangentFrame.at(origin)

    def gap(t):
        p = frame.from_enu(d * t)
        return float(surf(p.latitude_deg, p.longitude_deg)) - p.altitude_m

    lo, hi = 0.0, 200.0
    ts = np.linspace(lo, hi, 4001)
    k = next(i for i, t in enumerate(ts) if gap(t) >= 0)
    a, b = ts[k - 1], ts[k]
    for _ in range(60):
        m = 0.5 * (a + b)
        a, b = (a, m) if gap(m) >= 0 else (m, b)
    truth = frame.from_enu(d * b)
    err = haversine_m(res.hit, truth)
    cell = max(grid.cell_size_m)
    return res.is_hit and err < 2 * cell, f"grid vs analytic trench hit differ by {err:.2f} m (cell {cell:.1f} m)"


def _check_reference_pixel():
    sel = check_calibrated_convention()
    return sel.residual_m <= 0.5, f"residual {sel.residual_m:.4f} m with {sel.convention.describe()}"


def _nominal_scene(height=60.0, pitch=-45.0):
    grid = synth_terrain(TerrainKind.FLAT, base_elevation_m=GROUND_M, extent_m=1000.0)
    pos = GeodeticPosition(DEFAULT_CENTER[0], DEFAULT_CENTER[1], GROUND_M + height)
    state = VehicleState(pos, GimbalState.from_euler(30.0, pitch, 0.0))
    truth = geolocate_pixel(grid, state, _CAM, (960, 540)).hit
    return grid, Scene(state, _CAM, pixel=(960.0, 540.0)), truth


def _mc_monotone(field_name, levels, trials=150):
    grid, scene, truth = _nominal_scene()
    means = [
        monte_carlo_geolocation(grid, scene, truth, NoiseModel(**{field_name: s}), trials, seed=7).mean_haversine_m
        for s in levels
    ]
    ok = means[0] == 0.0 and all(b > a for a, b in zip(means, means[1:]))
    return ok, "mean error " + ", ".join(f"{m:.3f}" for m in means) + f" m for {field_name} {levels}"


def _check_gps():
    return _mc_monotone("gps_sigma_h_m", [0.0, 0.5, 1.5, 3.0])


def _check_attitude():
    return _mc_monotone("attitude_sigma_deg", [0.0, 0.25, 0.5, 1.0])


def _check_pixel():
    grid, scene, _ = _nominal_scene()
    full = geolocate_detection(grid, scene.state, _CAM, (0, 0, 1920, 1080))
    centre = geolocate_pixel(grid, scene.state, _CAM, (960, 540))
    ok_bbox = full.hit == centre.hit
    ok_mono, detail = _mc_monotone("pixel_sigma_px", [0.0, 2.0, 8.0, 20.0])
    return ok_bbox and ok_mono, f"full-frame bbox == centre pixel: {ok_bbox}; {detail}"


def _check_bus_loss():
    rep = run_collaborative(bus=BusConfig(drop_probability=1.0), expect_delivery=False)
    return rep.passed and not rep.final_states["helper"]["reoriented"], f"bus {rep.bus}"


def _check_latency_misalignment():
    person = GeodeticPosition(DEFAULT_CENTER[0], DEFAULT_CENTER[1], GROUND_M)
    start = _offset(person, -50.0, -60.0, 60.0)
    end = _offset(person, 50.0, -60.0, 60.0)
    errs = []
    for latency in (0.0, 0.5):
        doc = {
            "version": 1, "name": "latency", "seed": 0,
            "terrain": {"kind": "FLAT", "params": {"base_elevation_m": GROUND_M}},
            "agents": [{"id": "a", "position": _lla(start), "attitude": {"yaw": 0.0, "pitch": -45.0},
                        "noise": {"latency_s": latency}}],
            "script": [
                {"t": 0.0, "type": "move_to", "agent": "a", "position": _lla(end), "duration_s": 10.0},
                {"t": 5.0, "type": "detect_at_pixel", "agent": "a", "label": "p", "truth": _lla(person)},
            ],
        }
        rep = run_scenario(scenario_from_dict(doc))
        errs.append(rep.detection_stats.max_haversine_m)
    # 10 m/s for 0.5 s shifts the believed origin, and so the fix, by 5 m.
    # The zero-latency residual is the flat-tangent curvature term (sub-mm here).
    ok = errs[0] < 0.01 and abs(errs[1] - 5.0) < 0.05
    return ok, f"fix error {errs[0]:.4f} m without latency, {errs[1]:.4f} m with 0.5 s latency at 10 m/s"


def _check_reordering():
    rep = run_scenario(scenario_from_dict(reordering_doc()))
    return rep.passed, f"reordered {rep.bus['reordered']}"


def _check_collaborative():
    rep = run_collaborative()
    return rep.passed, "; ".join(f"{a.check}={a.measured}" for a in rep.assertions)


BUILTIN_CHECKS: tuple[BuiltinCheck, ...] = (
    BuiltinCheck("ridge-crest-undersampling", TestTag("UNIT", "SIL", "EDGE", frozenset({"C1"})), _check_ridge_undersampling),
    BuiltinCheck("gully-surface-smoothing", TestTag("INTEGRATION", "SIL", "MODERATE", frozenset({"C2"})), _check_gully_smoothing),
    BuiltinCheck("reference-pixel-geolocation", TestTag("UNIT", "SIL", "SIMPLE", frozenset({"C3"})), _check_reference_pixel),
    BuiltinCheck("gps-noise-propagation", TestTag("INTEGRATION", "SIL", "MODERATE", frozenset({"C3", "C4"})), _check_gps),
    BuiltinCheck("attitude-noise-propagation", TestTag("INTEGRATION", "SIL", "MODERATE", frozenset({"C3", "C5"})), _check_attitude),
    BuiltinCheck("detection-centre-noise", TestTag("INTEGRATION", "SIL", "MODERATE", frozenset({"C6"})), _check_pixel),
    BuiltinCheck("collaborative-detection", TestTag("SYSTEM", "SIL", "MODERATE", frozenset({"C3", "C7"})), _check_collaborative),
    BuiltinCheck("total-message-loss", TestTag("SYSTEM", "SIL", "EDGE", frozenset({"C7"})), _check_bus_loss),
    BuiltinCheck("out-of-order-fixes", TestTag("INTEGRATION", "SIL", "EDGE", frozenset({"C7"})), _check_reordering),
    BuiltinCheck("pose-latency-misalignment", TestTag("INTEGRATION", "SIL", "EDGE", frozenset({"C7"})), _check_latency_misalignment),
)


def run_builtin_suite() -> list[CheckResult]:
    return [c.run() for c in BUILTIN_CHECKS]


def builtin_taxonomy() -> tuple[list[CheckResult], TaxonomyReport]:
    results = run_builtin_suite()
    return results, taxonomy_report((r.tag, r.passed) for r in results)
