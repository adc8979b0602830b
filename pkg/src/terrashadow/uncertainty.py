"""Sensor noise models, Monte Carlo error propagation and the altitude-bias law."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidInputError, ValidationError
from .geodesy import GeodeticPosition, TangentFrame, haversine_m
from .geolocate import GeolocationStatus, VehicleState, bbox_center, geolocate_pixel
from .optics import CameraModel, quat_from_rotvec
from .terrain import TerrainGrid

# Normals drawn per trial: east, north, up, roll, pitch, yaw, pixel x, pixel y.
_DRAWS_PER_TRIAL = 8


@dataclass(frozen=True)
class NoiseModel:
    gps_sigma_h_m: float = 0.0
    gps_sigma_v_m: float = 0.0
    altitude_bias_m: float = 0.0
    attitude_sigma_deg: float = 0.0
    pixel_sigma_px: float = 0.0
    hdop_scale: float = 1.0
    latency_s: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "seed":
                if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 0:
                    raise InvalidInputError("noise seed must be a non-negative integer")
                continue
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise InvalidInputError(f"noise field {f.name} must be a finite number")
            object.__setattr__(self, f.name, float(v))
        for name in ("gps_sigma_h_m", "gps_sigma_v_m", "attitude_sigma_deg", "pixel_sigma_px", "latency_s"):
            if getattr(self, name) < 0:
                raise InvalidInputError(f"{name} must be >= 0")
        if self.hdop_scale < 1.0:
            raise InvalidInputError("hdop_scale must be >= 1")

    @property
    def is_zero(self) -> bool:
        return (
            self.gps_sigma_h_m == 0 and self.gps_sigma_v_m == 0 and self.altitude_bias_m == 0
            and self.attitude_sigma_deg == 0 and self.pixel_sigma_px == 0
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "NoiseModel":
        if not isinstance(doc, Mapping):
            raise ValidationError("noise model must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise ValidationError(f"unknown noise fields: {sorted(extra)}")
        try:
            return cls(**doc)
        except InvalidInputError as exc:
            raise ValidationError(str(exc)) from None


# Approximate magnitudes read off the published scatter plots. Not calibrated
# to any particular receiver or site.
PRESETS: dict[str, NoiseModel] = {
    "zero": NoiseModel(),
    "scatter-ground": NoiseModel(gps_sigma_h_m=2.0, gps_sigma_v_m=1.5),
    "scatter-airborne": NoiseModel(gps_sigma_h_m=0.5, gps_sigma_v_m=0.5),
    "field-plausibility": NoiseModel(
        gps_sigma_h_m=1.5, gps_sigma_v_m=1.0, altitude_bias_m=3.0, attitude_sigma_deg=0.5
    ),
}


def load_noise(spec: str | Path) -> NoiseModel:
    """Preset name or path to a JSON noise file."""
    key = str(spec)
    if key in PRESETS:
        return PRESETS[key]
    path = Path(key)
    if not path.exists():
        raise InvalidInputError(f"no noise preset or file named {key!r} (presets: {', '.join(PRESETS)})")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return NoiseModel.from_dict(doc)


def trial_rng(seed: int, trial_index: int) -> np.random.Generator:
    """Independent generator for one trial, derived from (seed, trial) only."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial_index)]))


def _draws(noise: NoiseModel, trial_index: int) -> np.ndarray:
    return trial_rng(noise.seed, trial_index).standard_normal(_DRAWS_PER_TRIAL)


def perturb_state(state: VehicleState, noise: NoiseModel, trial_index: int) -> VehicleState:
    """The state the vehicle believes it is in for one trial.

    Components with zero sigma are left bit-for-bit untouched.
    """
    z = _draws(noise, trial_index)
    pos = state.position
    sh = noise.gps_sigma_h_m * noise.hdop_scale
    if sh > 0:
        moved = TangentFrame.at(pos).from_enu((sh * z[0], sh * z[1], 0.0))
        lat, lon = moved.latitude_deg, moved.longitude_deg
    else:
        lat, lon = pos.latitude_deg, pos.longitude_deg
    alt = pos.altitude_m
    if noise.gps_sigma_v_m > 0:
        alt = alt + noise.gps_sigma_v_m * z[2]
    if noise.altitude_bias_m != 0:
        alt = alt + noise.altitude_bias_m
    if (lat, lon, alt) != (pos.latitude_deg, pos.longitude_deg, pos.altitude_m):
        pos = GeodeticPosition(lat, lon, alt, pos.datum)
    attitude = state.attitude
    if noise.attitude_sigma_deg > 0:
        s = math.radians(noise.attitude_sigma_deg)
        attitude = attitude.compose(quat_from_rotvec((s * z[3], s * z[4], s * z[5])))
    if pos is state.position and attitude is state.attitude:
        return state
    return replace(state, position=pos, attitude=attitude)


def perturb_pixel(cam: CameraModel, px: Sequence[float], noise: NoiseModel, trial_index: int) -> tuple[float, float]:
    """Detection-centre jitter, clamped to the frame."""
    x, y = float(px[0]), float(px[1])
    if noise.pixel_sigma_px == 0:
        return (x, y)
    z = _draws(noise, trial_index)
    x = min(max(x + noise.pixel_sigma_px * z[6], 0.0), math.nextafter(cam.width_px, 0.0))
    y = min(max(y + noise.pixel_sigma_px * z[7], 0.0), math.nextafter(cam.height_px, 0.0))
    return (x, y)


def analytic_bias_error(bias_m: float, depression_angle_deg: float) -> float:
    """Signed horizontal displacement caused by an altitude bias over flat ground.

    The magnitude is ``|bias| / tan(depression)``. The sign follows the
    bias: a vehicle that believes it is lower than it is (negative bias)
    reports a point nearer to itself, so the result is negative (toward the
    vehicle); positive means away from it.
    """
    if not math.isfinite(bias_m):
        raise InvalidInputError("bias must be finite")
    if not 0.0 < depression_angle_deg < 90.0:
        raise InvalidInputError(f"depression angle {depression_angle_deg} outside (0, 90): ray never reaches flat ground")
    return bias_m / math.tan(math.radians(depression_angle_deg))


@dataclass(frozen=True)
class Scene:
    state: VehicleState
    camera: CameraModel
    pixel: tuple[float, float] | None = None
    bbox: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        if (self.pixel is None) == (self.bbox is None):
            raise InvalidInputError("scene needs exactly one of pixel or bbox")

    @property
    def target_pixel(self) -> tuple[float, float]:
        if self.bbox is not None:
            return bbox_center(self.camera, self.bbox)
        return (float(self.pixel[0]), float(self.pixel[1]))


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    d_haversine_m: float
    d_elev_m: float
    status: str


@dataclass(frozen=True)
class ErrorStats:
    n: int
    mean_haversine_m: float
    max_haversine_m: float
    mean_abs_elevation_err_m: float
    max_abs_elevation_err_m: float
    miss_count: int
    records: tuple[TrialRecord, ...] = field(repr=False, default=())

    @property
    def hit_count(self) -> int:
        return self.n - self.miss_count

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("records")
        return d

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trial", "d_haversine_m", "d_elev_m", "status"])
        for r in self.records:
            w.writerow([r.trial, repr(r.d_haversine_m), repr(r.d_elev_m), r.status])
        return buf.getvalue()


def summarize(records: Sequence[TrialRecord]) -> ErrorStats:
    """Aggregate per-trial records; means are over hits and NaN if none hit."""
    hits = [r for r in records if r.status == GeolocationStatus.HIT.value]
    if hits:
        dh = sorted(r.d_haversine_m for r in hits)
        de = sorted(r.d_elev_m for r in hits)
        # Sorted sums make the mean independent of trial order.
        stats = (math.fsum(dh) / len(dh), dh[-1], math.fsum(de) / len(de), de[-1])
    else:
        stats = (math.nan, math.nan, math.nan, math.nan)
    return ErrorStats(len(records), *stats, len(records) - len(hits), tuple(records))


def run_trial(grid: TerrainGrid, scene: Scene, truth: GeodeticPosition, noise: NoiseModel, trial_index: int) -> TrialRecord:
    believed = perturb_state(scene.state, noise, trial_index)
    px = perturb_pixel(scene.camera, scene.target_pixel, noise, trial_index)
    res = geolocate_pixel(grid, believed, scene.camera, px)
    if not res.is_hit:
        return TrialRecord(trial_index, math.nan, math.nan, res.status.value)
    return TrialRecord(
        trial_index,
        haversine_m(res.hit, truth),
        abs(res.hit.altitude_m - truth.altitude_m),
        res.status.value,
    )


def monte_carlo_geolocation(
    grid: TerrainGrid,
    scene: Scene,
    truth: GeodeticPosition,
    noise: NoiseModel,
    trials: int,
    seed: int | None = None,
) -> ErrorStats:
    """Geolocate ``trials`` perturbed copies of ``scene`` and measure the error to ``truth``.

    ``seed`` overrides the noise model's seed. Every trial draws from its
    own generator, so any subset of trials can be recomputed in isolation.
    """
    if isinstance(trials, bool) or not isinstance(trials, (int, np.integer)) or trials < 1:
        raise InvalidInputError("trials must be a positive integer")
    if seed is not None:
        noise = replace(noise, seed=int(seed))
    return summarize([run_trial(grid, scene, truth, noise, i) for i in range(int(trials))])
