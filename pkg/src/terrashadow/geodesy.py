"""WGS84 geodetic positions, ECEF and local East-North-Up frames.

Only the WGS84 ellipsoid is supported. Altitudes carry an explicit datum
tag; the ECEF conversions require ellipsoidal heights, and AMSL heights
are converted with a single per-site geoid undulation constant.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DatumMismatchError, InvalidInputError

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_B = WGS84_A * (1.0 - WGS84_F)
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)

MEAN_EARTH_RADIUS_M = 6371008.8


class Datum(str, enum.Enum):
    ELLIPSOID_WGS84 = "ELLIPSOID_WGS84"
    AMSL = "AMSL"

    @classmethod
    def parse(cls, text: str | "Datum") -> "Datum":
        if isinstance(text, Datum):
            return text
        key = str(text).strip().upper()
        aliases = {
            "ELLIPSOID": cls.ELLIPSOID_WGS84,
            "WGS84": cls.ELLIPSOID_WGS84,
            "ELLIPSOIDWGS84": cls.ELLIPSOID_WGS84,
            "DATUMREFERENCE.ELLIPSOIDWGS84": cls.ELLIPSOID_WGS84,
            "MSL": cls.AMSL,
        }
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise InvalidInputError(f"unknown datum {text!r}") from None


def _normalize_lon(lon: float) -> float:
    if -180.0 <= lon <= 180.0:
        return lon
    wrapped = math.fmod(lon + 180.0, 360.0)
    if wrapped < 0:
        wrapped += 360.0
    return wrapped - 180.0


@dataclass(frozen=True)
class GeodeticPosition:
    """Latitude/longitude in degrees and altitude in meters above ``datum``."""

    latitude_deg: float
    longitude_deg: float
    altitude_m: float
    datum: Datum = Datum.ELLIPSOID_WGS84

    def __post_init__(self):
        lat, lon, alt = float(self.latitude_deg), float(self.longitude_deg), float(self.altitude_m)
        if not (math.isfinite(lat) and math.isfinite(lon) and math.isfinite(alt)):
            raise InvalidInputError("geodetic position components must be finite")
        if not -90.0 <= lat <= 90.0:
            raise InvalidInputError(f"latitude {lat} outside [-90, 90]")
        object.__setattr__(self, "latitude_deg", lat)
        object.__setattr__(self, "longitude_deg", _normalize_lon(lon))
        object.__setattr__(self, "altitude_m", alt)
        object.__setattr__(self, "datum", Datum.parse(self.datum))

    def with_altitude(self, altitude_m: float) -> "GeodeticPosition":
        return GeodeticPosition(self.latitude_deg, self.longitude_deg, altitude_m, self.datum)

    def as_tuple(self) -> tuple[float, float, float, str]:
        return (self.latitude_deg, self.longitude_deg, self.altitude_m, self.datum.value)


@dataclass(frozen=True)
class EcefVector:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.x, self.y, self.z)):
            raise InvalidInputError("ECEF components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)


def _require_ellipsoid(p: GeodeticPosition) -> None:
    if p.datum is not Datum.ELLIPSOID_WGS84:
        raise DatumMismatchError(
            f"operation needs ellipsoidal height, got {p.datum.value}; convert with datum_convert first"
        )


def lla_to_ecef(p: GeodeticPosition) -> EcefVector:
    _require_ellipsoid(p)
    lat = math.radians(p.latitude_deg)
    lon = math.radians(p.longitude_deg)
    sin_lat, cos_lat = math.sin(lat), math.cos(lat)
    n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * sin_lat * sin_lat)
    h = p.altitude_m
    return EcefVector(
        (n + h) * cos_lat * math.cos(lon),
        (n + h) * cos_lat * math.sin(lon),
        (n * (1.0 - WGS84_E2) + h) * sin_lat,
    )


def ecef_to_lla(v: EcefVector) -> GeodeticPosition:
    """Invert :func:`lla_to_ecef` by fixed-point iteration on latitude.

    The height update uses ``p cos(lat) + z sin(lat) - a^2/N`` which stays
    well conditioned at the poles.
    """
    if v.norm < 1e6:
        raise InvalidInputError(f"ECEF point too close to Earth's center ({v.norm:.1f} m)")
    x, y, z = v.x, v.y, v.z
    p = math.hypot(x, y)
    lon = math.atan2(y, x)
    lat = math.atan2(z, p * (1.0 - WGS84_E2))
    h = 0.0
    for _ in range(20):
        sin_lat = math.sin(lat)
        n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * sin_lat * sin_lat)
        h = p * math.cos(lat) + z * sin_lat - WGS84_A * WGS84_A / n
        new_lat = math.atan2(z, p * (1.0 - WGS84_E2 * n / (n + h)))
        if abs(new_lat - lat) < 1e-15:
            lat = new_lat
            break
        lat = new_lat
    sin_lat = math.sin(lat)
    n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * sin_lat * sin_lat)
    h = p * math.cos(lat) + z * sin_lat - WGS84_A * WGS84_A / n
    return GeodeticPosition(math.degrees(lat), math.degrees(lon), h, Datum.ELLIPSOID_WGS84)


def _enu_basis(lat_deg: float, lon_deg: float) -> np.ndarray:
    lat, lon = math.radians(lat_deg), math.radians(lon_deg)
    sl, cl = math.sin(lat), math.cos(lat)
    so, co = math.sin(lon), math.cos(lon)
    return np.array([
        [-so, co, 0.0],
        [-sl * co, -sl * so, cl],
        [cl * co, cl * so, sl],
    ])


@dataclass(frozen=True)
class TangentFrame:
    """Local East-North-Up frame anchored at ``origin``.

    ``basis`` rows are the East, North and Up unit vectors expressed in
    ECEF. The origin may carry either datum; points passed to
    :meth:`to_enu` must share it. For an AMSL origin the heights are
    treated as ellipsoidal, which is exact up to the variation of the
    geoid undulation across the site.
    """

    origin: GeodeticPosition
    basis: np.ndarray = field(repr=False)
    origin_ecef: np.ndarray = field(repr=False)

    @classmethod
    def at(cls, origin: GeodeticPosition) -> "TangentFrame":
        basis = _enu_basis(origin.latitude_deg, origin.longitude_deg)
        basis.setflags(write=False)
        ecef = lla_to_ecef(_as_ellipsoid(origin)).as_array()
        ecef.setflags(write=False)
        return cls(origin, basis, ecef)

    def to_enu(self, p: GeodeticPosition) -> np.ndarray:
        if p.datum is not self.origin.datum:
            raise DatumMismatchError(
                f"frame origin is {self.origin.datum.value}, point is {p.datum.value}"
            )
        return self.basis @ (lla_to_ecef(_as_ellipsoid(p)).as_array() - self.origin_ecef)

    def from_enu(self, enu) -> GeodeticPosition:
        ecef = self.origin_ecef + self.basis.T @ np.asarray(enu, dtype=float)
        p = ecef_to_lla(EcefVector(*map(float, ecef)))
        return GeodeticPosition(p.latitude_deg, p.longitude_deg, p.altitude_m, self.origin.datum)


def _as_ellipsoid(p: GeodeticPosition) -> GeodeticPosition:
    if p.datum is Datum.ELLIPSOID_WGS84:
        return p
    return GeodeticPosition(p.latitude_deg, p.longitude_deg, p.altitude_m, Datum.ELLIPSOID_WGS84)


def frame_at(p: GeodeticPosition) -> TangentFrame:
    return TangentFrame.at(p)


def to_enu(frame: TangentFrame, p: GeodeticPosition) -> np.ndarray:
    return frame.to_enu(p)


def from_enu(frame: TangentFrame, enu) -> GeodeticPosition:
    return frame.from_enu(enu)


def degrees_per_meter(lat_deg: float, altitude_m: float = 0.0) -> tuple[float, float]:
    """Return (deg latitude per meter north, deg longitude per meter east).

    These are the exact derivatives of geodetic latitude/longitude with
    respect to horizontal ENU displacement at the given point.
    """
    lat = math.radians(lat_deg)
    sin_lat = math.sin(lat)
    w = 1.0 - WGS84_E2 * sin_lat * sin_lat
    n = WGS84_A / math.sqrt(w)
    m = WGS84_A * (1.0 - WGS84_E2) / (w * math.sqrt(w))
    cos_lat = math.cos(lat)
    if cos_lat < 1e-12:
        raise InvalidInputError("longitude scale undefined at the poles")
    k_lat = math.degrees(1.0 / (m + altitude_m))
    k_lon = math.degrees(1.0 / ((n + altitude_m) * cos_lat))
    return k_lat, k_lon


def haversine_m(a: GeodeticPosition, b: GeodeticPosition) -> float:
    """Great-circle distance on a sphere of radius 6371008.8 m; altitude ignored."""
    phi1 = math.radians(a.latitude_deg)
    phi2 = math.radians(b.latitude_deg)
    dphi = phi2 - phi1
    dlmb = math.radians(b.longitude_deg - a.longitude_deg)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2.0) ** 2
    return 2.0 * MEAN_EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def datum_convert(p: GeodeticPosition, geoid_undulation_m: float, target: Datum | str) -> GeodeticPosition:
    """Switch the vertical datum using ``h_ellipsoid = h_amsl + undulation``."""
    if not math.isfinite(geoid_undulation_m):
        raise InvalidInputError("geoid undulation must be finite")
    target = Datum.parse(target)
    if p.datum is target:
        return p
    if target is Datum.ELLIPSOID_WGS84:
        alt = p.altitude_m + geoid_undulation_m
    else:
        alt = p.altitude_m - geoid_undulation_m
    return GeodeticPosition(p.latitude_deg, p.longitude_deg, alt, target)


def bearing_deg(frm: GeodeticPosition, to: GeodeticPosition) -> float:
    """Compass bearing (clockwise from north, [0, 360)) from ``frm`` to ``to``."""
    frame = TangentFrame.at(frm)
    e, n, _ = frame.to_enu(to)
    return math.degrees(math.atan2(e, n)) % 360.0
