"""Gridded terrain model: elevation, land cover and discrete features per cell.

Row ``i`` / column ``j`` address the cell whose south-west corner is
``(lat0 + i*dlat, lon0 + j*dlon)``; row 0 is the southern edge. Arrays
are row-major ``rows x cols``.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    GridFormatError,
    GridTooLargeError,
    InvalidInputError,
    OutOfRegionError,
    UnsupportedVersionError,
    ValidationError,
)
from .geodesy import Datum, degrees_per_meter
from .spatial_index import (
    BBox,
    Geometry2D,
    Point,
    Polygon,
    Polyline,
    StrTree,
    intersects,
)

MAX_CELLS = 10**7
DEFAULT_CELL_SIZE_DEG = 1e-4
GRID_FORMAT_VERSION = 1


class LandCover(enum.IntEnum):
    BACKGROUND = 0
    WOODLAND = 1
    WATERWAY = 2
    ROAD = 3
    BUILDING = 4
    GRASSLAND = 5
    SHRUBLAND = 6
    WETLAND = 7
    DEVELOPED = 8
    BARREN = 9
    CROPLAND = 10


class Provenance(enum.IntEnum):
    BASE_USGS = 0
    CV_SEGMENTATION = 1


class FeatureKind(str, enum.Enum):
    WATER = "water"
    ROAD = "road"
    TRAIL = "trail"


class ElevationMode(str, enum.Enum):
    NEAREST = "NEAREST"
    BILINEAR = "BILINEAR"


@dataclass(frozen=True)
class Feature:
    id: int
    kind: FeatureKind
    geometry: Geometry2D

    def __post_init__(self):
        object.__setattr__(self, "kind", FeatureKind(self.kind))


@dataclass(frozen=True)
class TerrainCell:
    row: int
    col: int
    corners: tuple[tuple[float, float], ...]  # SW, SE, NE, NW as (lat, lon)
    centroid: tuple[float, float]
    elevation_m: float
    datum: Datum
    land_cover: LandCover
    provenance: Provenance
    discrete_features: tuple[int, ...]


@dataclass(frozen=True)
class CellInfo:
    row: int
    col: int
    elevation_m: float
    land_cover: LandCover
    provenance: Provenance
    features: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class TerrainGrid:
    """Immutable terrain model; build with :func:`build_grid` or :func:`load_grid`."""

    lat0: float
    lon0: float
    dlat: float
    dlon: float
    rows: int
    cols: int
    datum: Datum
    elevation: np.ndarray = field(repr=False)
    land_cover: np.ndarray = field(repr=False)
    provenance: np.ndarray = field(repr=False)
    features: Mapping[int, Feature] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        shape = (self.rows, self.cols)
        for name in ("elevation", "land_cover", "provenance"):
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValidationError(f"{name} has shape {arr.shape}, expected {shape}")
            arr.setflags(write=False)
        if not np.all(np.isfinite(self.elevation)):
            raise ValidationError("elevations must be finite")
        object.__setattr__(self, "features", dict(sorted(self.features.items())))

    # geometry -------------------------------------------------------------

    @cached_property
    def lat_edges(self) -> np.ndarray:
        return self.lat0 + np.arange(self.rows + 1) * self.dlat

    @cached_property
    def lon_edges(self) -> np.ndarray:
        return self.lon0 + np.arange(self.cols + 1) * self.dlon

    @cached_property
    def centroid_lats(self) -> np.ndarray:
        e = self.lat_edges
        return (e[:-1] + e[1:]) / 2.0

    @cached_property
    def centroid_lons(self) -> np.ndarray:
        e = self.lon_edges
        return (e[:-1] + e[1:]) / 2.0

    @property
    def region(self) -> BBox:
        return (self.lat0, self.lon0, float(self.lat_edges[-1]), float(self.lon_edges[-1]))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def cell_size_deg(self) -> tuple[float, float]:
        return (self.dlat, self.dlon)

    @cached_property
    def cell_size_m(self) -> tuple[float, float]:
        """Approximate (north, east) cell extent in meters at the grid center."""
        lat_c = (self.region[0] + self.region[2]) / 2.0
        k_lat, k_lon = degrees_per_meter(lat_c)
        return (self.dlat / k_lat, self.dlon / k_lon)

    @cached_property
    def min_elevation(self) -> float:
        return float(self.elevation.min())

    @cached_property
    def max_elevation(self) -> float:
        return float(self.elevation.max())

    def contains(self, lat: float, lon: float) -> bool:
        r = self.region
        return r[0] <= lat <= r[2] and r[1] <= lon <= r[3]

    def cell_bbox(self, row: int, col: int) -> BBox:
        return (
            float(self.lat_edges[row]),
            float(self.lon_edges[col]),
            float(self.lat_edges[row + 1]),
            float(self.lon_edges[col + 1]),
        )

    def cell_polygon(self, row: int, col: int) -> Polygon:
        return Polygon.from_bbox(self.cell_bbox(row, col))

    def cell(self, row: int, col: int) -> TerrainCell:
        if not (0 <= row < self.rows and 0 <= col < self.cols):
            raise IndexError(f"cell ({row}, {col}) outside {self.rows}x{self.cols} grid")
        s, w, n, e = self.cell_bbox(row, col)
        return TerrainCell(
            row=row,
            col=col,
            corners=((s, w), (s, e), (n, e), (n, w)),
            centroid=(float(self.centroid_lats[row]), float(self.centroid_lons[col])),
            elevation_m=float(self.elevation[row, col]),
            datum=self.datum,
            land_cover=LandCover(int(self.land_cover[row, col])),
            provenance=Provenance(int(self.provenance[row, col])),
            discrete_features=self.features_in_cell(row, col),
        )

    # indexes ---------------------------------------------------------------

    @cached_property
    def continuous_index(self) -> StrTree:
        """STR tree over cell boxes; item id is ``row * cols + col``."""
        la, lo = self.lat_edges, self.lon_edges
        items = [
            ((float(la[i]), float(lo[j]), float(la[i + 1]), float(lo[j + 1])), i * self.cols + j)
            for i in range(self.rows)
            for j in range(self.cols)
        ]
        return StrTree(items)

    @cached_property
    def discrete_index(self) -> StrTree | None:
        if not self.features:
            return None
        return StrTree([(f.geometry.bbox, fid) for fid, f in self.features.items()])

    def nearest_cell(self, lat: float, lon: float) -> tuple[int, int]:
        self._require_inside(lat, lon)
        cid = self.continuous_index.nearest((lat, lon))
        return divmod(cid, self.cols)

    def features_in_cell(self, row: int, col: int) -> tuple[int, ...]:
        if self.discrete_index is None:
            return ()
        bbox = self.cell_bbox(row, col)
        quad = Polygon.from_bbox(bbox)
        hits = [
            fid for fid in self.discrete_index.query_bbox(bbox)
            if intersects(quad, self.features[fid].geometry)
        ]
        return tuple(sorted(hits))

    @cached_property
    def water_mask(self) -> np.ndarray:
        """Cells carrying a base water attribute (water land cover or water feature)."""
        mask = self.land_cover == int(LandCover.WATERWAY)
        for fid, f in self.features.items():
            if f.kind is not FeatureKind.WATER:
                continue
            for row, col in self._cells_overlapping(f.geometry.bbox):
                if not mask[row, col] and intersects(self.cell_polygon(row, col), f.geometry):
                    mask[row, col] = True
        mask.setflags(write=False)
        return mask

    def _cells_overlapping(self, bbox: BBox):
        i0 = max(0, int(math.floor((bbox[0] - self.lat0) / self.dlat)) - 1)
        i1 = min(self.rows - 1, int(math.floor((bbox[2] - self.lat0) / self.dlat)) + 1)
        j0 = max(0, int(math.floor((bbox[1] - self.lon0) / self.dlon)) - 1)
        j1 = min(self.cols - 1, int(math.floor((bbox[3] - self.lon0) / self.dlon)) + 1)
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                yield i, j

    def _require_inside(self, lat: float, lon: float) -> None:
        if not self.contains(lat, lon):
            raise OutOfRegionError(f"({lat}, {lon}) is outside grid region {self.region}")

    # surface -----------------------------------------------------------------

    def grid_coords(self, lat: float, lon: float) -> tuple[float, float]:
        """Fractional (row, col) with cell centroids at integer values."""
        return ((lat - self.lat0) / self.dlat - 0.5, (lon - self.lon0) / self.dlon - 0.5)

    def patch_corners(self, pi: int, pj: int) -> tuple[float, float, float, float]:
        """Elevations (z00, z10, z01, z11) of bilinear patch ``(pi, pj)``.

        Patch ``(pi, pj)`` spans fractional coordinates ``[pi, pi+1] x
        [pj, pj+1]``; indices -1 and rows-1 (cols-1) are the half-width
        border strips where the surface is clamped to the edge centroids.
        """
        a = min(max(pi, 0), self.rows - 1)
        b = min(max(pi + 1, 0), self.rows - 1)
        c = min(max(pj, 0), self.cols - 1)
        d = min(max(pj + 1, 0), self.cols - 1)
        e = self.elevation
        return (float(e[a, c]), float(e[b, c]), float(e[a, d]), float(e[b, d]))

    def bilinear_at_coords(self, u: float, v: float) -> float:
        pi = min(max(int(math.floor(u)), -1), self.rows - 1)
        pj = min(max(int(math.floor(v)), -1), self.cols - 1)
        s = min(max(u - pi, 0.0), 1.0)
        r = min(max(v - pj, 0.0), 1.0)
        z00, z10, z01, z11 = self.patch_corners(pi, pj)
        return z00 + (z10 - z00) * s + (z01 - z00) * r + (z00 - z10 - z01 + z11) * s * r


def elevation_at(grid: TerrainGrid, lat: float, lon: float, mode: ElevationMode | str = ElevationMode.NEAREST) -> float:
    """Terrain elevation at a point inside the grid region.

    NEAREST returns the elevation of the cell with the closest centroid
    (looked up through the continuous index). BILINEAR blends the four
    surrounding centroids, clamping to the edge values in the border strip.
    """
    mode = mode if isinstance(mode, ElevationMode) else ElevationMode(str(mode).upper())
    grid._require_inside(lat, lon)
    if mode is ElevationMode.NEAREST:
        row, col = grid.nearest_cell(lat, lon)
        return float(grid.elevation[row, col])
    u, v = grid.grid_coords(lat, lon)
    return grid.bilinear_at_coords(u, v)


def query_point(grid: TerrainGrid, lat: float, lon: float) -> CellInfo:
    row, col = grid.nearest_cell(lat, lon)
    return CellInfo(
        row=row,
        col=col,
        elevation_m=float(grid.elevation[row, col]),
        land_cover=LandCover(int(grid.land_cover[row, col])),
        provenance=Provenance(int(grid.provenance[row, col])),
        features=grid.features_in_cell(row, col),
    )


def _cell_counts(region: BBox, cell_size_deg) -> tuple[int, int, float, float]:
    lat0, lon0, lat1, lon1 = (float(c) for c in region)
    if isinstance(cell_size_deg, (int, float)):
        dlat = dlon = float(cell_size_deg)
    else:
        dlat, dlon = (float(c) for c in cell_size_deg)
    if not (dlat > 0 and dlon > 0):
        raise InvalidInputError("cell size must be positive")
    if not (lat1 > lat0 and lon1 > lon0):
        raise InvalidInputError(f"degenerate region {region!r}")
    rows = max(1, math.ceil((lat1 - lat0) / dlat - 1e-9))
    cols = max(1, math.ceil((lon1 - lon0) / dlon - 1e-9))
    if rows * cols > MAX_CELLS:
        raise GridTooLargeError(rows * cols, MAX_CELLS)
    return rows, cols, dlat, dlon


def build_grid(
    region: BBox,
    cell_size_deg=DEFAULT_CELL_SIZE_DEG,
    elevation_sampler: Callable = None,
    landcover_sampler: Callable | None = None,
    *,
    datum: Datum | str = Datum.ELLIPSOID_WGS84,
    features: Iterable[Feature] = (),
    vectorized: bool = False,
) -> TerrainGrid:
    """Sample a region on a regular lat/lon grid.

    Args:
        region: ``(lat0, lon0, lat1, lon1)``; the grid starts at the
            south-west corner and may overshoot the north/east edge by
            less than one cell.
        cell_size_deg: scalar or ``(dlat, dlon)``.
        elevation_sampler: ``(lat, lon) -> meters`` evaluated at every
            centroid. With ``vectorized=True`` it receives broadcast arrays.
        landcover_sampler: ``(lat, lon) -> LandCover``; background if None.
        datum: vertical datum of the sampled elevations.
        features: discrete features (water, roads, trails).
    """
    if elevation_sampler is None:
        raise InvalidInputError("an elevation sampler is required")
    rows, cols, dlat, dlon = _cell_counts(region, cell_size_deg)
    lat0, lon0 = float(region[0]), float(region[1])
    la = lat0 + np.arange(rows + 1) * dlat
    lo = lon0 + np.arange(cols + 1) * dlon
    clat = (la[:-1] + la[1:]) / 2.0
    clon = (lo[:-1] + lo[1:]) / 2.0
    if vectorized:
        elev = np.asarray(elevation_sampler(clat[:, None], clon[None, :]), dtype=float)
        elev = np.broadcast_to(elev, (rows, cols)).copy()
    else:
        elev = np.empty((rows, cols))
        for i in range(rows):
            for j in range(cols):
                elev[i, j] = elevation_sampler(float(clat[i]), float(clon[j]))
    cover = np.zeros((rows, cols), dtype=np.int16)
    if landcover_sampler is not None:
        for i in range(rows):
            for j in range(cols):
                cover[i, j] = int(LandCover(landcover_sampler(float(clat[i]), float(clon[j]))))
    feats = {}
    for f in features:
        if f.id in feats:
            raise InvalidInputError(f"duplicate feature id {f.id}")
        feats[f.id] = f
    return TerrainGrid(
        lat0=lat0,
        lon0=lon0,
        dlat=dlat,
        dlon=dlon,
        rows=rows,
        cols=cols,
        datum=Datum.parse(datum),
        elevation=elev,
        land_cover=cover,
        provenance=np.zeros((rows, cols), dtype=np.int16),
        features=feats,
    )


CV_OVERWRITE = frozenset({LandCover.BUILDING, LandCover.WOODLAND, LandCover.ROAD})
CV_CLASSES = CV_OVERWRITE | {LandCover.WATERWAY, LandCover.BACKGROUND}


def merge_layers(base: TerrainGrid, cv) -> TerrainGrid:
    """Fuse a segmented land-cover raster into a base grid.

    Elevation and base features are never touched. Building, woodland and
    road pixels overwrite the base class. Waterway pixels are kept only
    where the base cell or one of its 8 neighbours already carries water,
    which suppresses isolated shadow blobs; background means no opinion.
    """
    cv = np.asarray(cv)
    if cv.shape != base.shape:
        raise InvalidInputError(f"cv raster shape {cv.shape} != grid shape {base.shape}")
    codes = set(np.unique(cv).tolist())
    unknown = codes - {int(c) for c in CV_CLASSES}
    if unknown:
        raise InvalidInputError(f"cv raster holds classes outside the segmentation set: {sorted(unknown)}")

    cover = np.array(base.land_cover, copy=True)
    prov = np.array(base.provenance, copy=True)
    overwrite = np.isin(cv, [int(c) for c in CV_OVERWRITE])
    cover[overwrite] = cv[overwrite]
    prov[overwrite] = int(Provenance.CV_SEGMENTATION)

    water = base.water_mask
    padded = np.pad(water, 1, constant_values=False)
    near_water = np.zeros_like(water)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            near_water |= padded[1 + di:1 + di + base.rows, 1 + dj:1 + dj + base.cols]
    accept = (cv == int(LandCover.WATERWAY)) & near_water
    cover[accept] = int(LandCover.WATERWAY)
    prov[accept] = int(Provenance.CV_SEGMENTATION)

    return TerrainGrid(
        lat0=base.lat0,
        lon0=base.lon0,
        dlat=base.dlat,
        dlon=base.dlon,
        rows=base.rows,
        cols=base.cols,
        datum=base.datum,
        elevation=base.elevation,
        land_cover=cover,
        provenance=prov,
        features=base.features,
    )


# --- synthetic terrain ----------------------------------------------------


class TerrainKind(str, enum.Enum):
    FLAT = "FLAT"
    GULLY = "GULLY"
    HILL = "HILL"
    RIDGE = "RIDGE"
    PEAKS = "PEAKS"


DEFAULT_CENTER = (36.212189, -96.006905)

_SYNTH_DEFAULTS = {
    "center": DEFAULT_CENTER,
    "extent_m": 600.0,
    "cell_size_deg": DEFAULT_CELL_SIZE_DEG,
    "base_elevation_m": 274.0,
    "datum": Datum.ELLIPSOID_WGS84,
    "ripple_m": 0.0,
    "depth_m": 6.0,
    "width_m": 12.0,
    "rise_m": 16.0,
    "height_m": 10.0,
    "half_width_m": 3.0,
    "crest_offset_m": None,
    "n_peaks": 5,
    "seed": 0,
}


@dataclass(frozen=True)
class SyntheticSurface:
    """Analytic elevation function behind a synthetic grid.

    Keeping the continuous surface lets sub-cell effects (a ridge crest
    that falls between centroids) be measured against the sampled grid.
    """

    kind: TerrainKind
    params: Mapping
    region: BBox
    function: Callable = field(repr=False)

    def __call__(self, lat, lon):
        return self.function(lat, lon)


def _synth_params(params: Mapping | None, overrides: Mapping) -> dict:
    merged = dict(_SYNTH_DEFAULTS)
    for src in (params or {}, overrides):
        for k, v in src.items():
            if k not in merged:
                raise InvalidInputError(f"unknown synthetic-terrain parameter {k!r}")
            merged[k] = v
    return merged


def synth_surface(kind: TerrainKind | str, params: Mapping | None = None, **overrides) -> SyntheticSurface:
    kind = kind if isinstance(kind, TerrainKind) else TerrainKind(str(kind).upper())
    p = _synth_params(params, overrides)
    lat_c, lon_c = (float(c) for c in p["center"])
    k_lat, k_lon = degrees_per_meter(lat_c)
    half = float(p["extent_m"]) / 2.0
    if half <= 0:
        raise InvalidInputError("extent_m must be positive")
    region = (lat_c - half * k_lat, lon_c - half * k_lon, lat_c + half * k_lat, lon_c + half * k_lon)
    rows, cols, dlat, dlon = _cell_counts(region, p["cell_size_deg"])
    clat = region[0] + (np.arange(rows) + 0.5) * dlat
    clon = region[1] + (np.arange(cols) + 0.5) * dlon
    base = float(p["base_elevation_m"])

    def east(lon):
        return (lon - lon_c) / k_lon

    def north(lat):
        return (lat - lat_c) / k_lat

    if kind is TerrainKind.FLAT:
        ripple = float(p["ripple_m"])
        if not 0.0 <= ripple <= 1.0:
            raise InvalidInputError("FLAT ripple_m must lie in [0, 1]")
        wavelength = 50.0

        def fn(lat, lon):
            return base + 0.5 * ripple * np.sin(2 * np.pi * east(lon) / wavelength) * np.sin(
                2 * np.pi * north(lat) / wavelength
            )

    elif kind is TerrainKind.GULLY:
        depth, sigma = float(p["depth_m"]), float(p["width_m"])
        if depth < 0 or sigma <= 0:
            raise InvalidInputError("GULLY needs depth_m >= 0 and width_m > 0")
        # Trench axis sits on the centroid column nearest the center so the
        # sampled grid reaches the full depth.
        axis = east(float(clon[np.argmin(np.abs(clon - lon_c))]))
        far = float(np.max(np.abs(east(clon) - axis)))
        g_far = math.exp(-far * far / (2 * sigma * sigma))

        def fn(lat, lon):
            x = east(lon) - axis
            g = np.exp(-x * x / (2 * sigma * sigma))
            return base - depth * np.maximum(0.0, (g - g_far) / (1.0 - g_far)) + 0.0 * lat

    elif kind is TerrainKind.HILL:
        rise = float(p["rise_m"])
        n_lo, n_hi = north(float(clat[0])), north(float(clat[-1]))
        span = (n_hi - n_lo) if rows > 1 else 1.0

        def fn(lat, lon):
            return base + rise * (north(lat) - n_lo) / span + 0.0 * lon

    elif kind is TerrainKind.RIDGE:
        height, hw = float(p["height_m"]), float(p["half_width_m"])
        if hw <= 0:
            raise InvalidInputError("RIDGE half_width_m must be positive")
        crest = p["crest_offset_m"]
        if crest is None:
            # Midway between two centroid columns: the sampled grid misses the crest.
            j = int(np.argmin(np.abs(clon - lon_c)))
            j2 = min(j + 1, cols - 1)
            crest = (east(float(clon[j])) + east(float(clon[j2]))) / 2.0
        crest = float(crest)
        p["crest_offset_m"] = crest

        def fn(lat, lon):
            return base + height * np.maximum(0.0, 1.0 - np.abs(east(lon) - crest) / hw) + 0.0 * lat

    else:
        rng = np.random.default_rng(int(p["seed"]))
        n = int(p["n_peaks"])
        px = rng.uniform(-half, half, n)
        py = rng.uniform(-half, half, n)
        ph = rng.uniform(20.0, 80.0, n)
        ps = rng.uniform(30.0, 100.0, n)

        def fn(lat, lon):
            x, y = east(lon), north(lat)
            z = base + 0.0 * x * y
            for k in range(n):
                z = z + ph[k] * np.exp(-((x - px[k]) ** 2 + (y - py[k]) ** 2) / (2 * ps[k] ** 2))
            return z

    return SyntheticSurface(kind, p, region, fn)


def synth_terrain(kind: TerrainKind | str, params: Mapping | None = None, **overrides) -> TerrainGrid:
    """Deterministic analytic test terrain sampled on a grid.

    FLAT is constant plus an optional ripple of at most 1 m peak to peak;
    GULLY is a Gaussian trench (``depth_m``, ``width_m``); HILL a linear
    northward ramp of ``rise_m``; RIDGE a narrow triangular crest between
    centroid columns; PEAKS a seeded sum of Gaussian hills.
    """
    surface = synth_surface(kind, params, **overrides)
    return build_grid(
        surface.region,
        surface.params["cell_size_deg"],
        surface,
        datum=surface.params["datum"],
        vectorized=True,
    )


# --- file format ------------------------------------------------------------


def _geometry_to_json(g: Geometry2D) -> dict:
    if isinstance(g, Point):
        lat, lon = g.vertex
        return {"type": "Point", "coordinates": [lon, lat]}
    if isinstance(g, Polyline):
        return {"type": "LineString", "coordinates": [[lon, lat] for lat, lon in g.vertices]}
    ring = [[lon, lat] for lat, lon in g.vertices]
    ring.append(ring[0])
    return {"type": "Polygon", "coordinates": [ring]}


def _geometry_from_json(obj, where: str) -> Geometry2D:
    try:
        kind = obj["type"]
        coords = obj["coordinates"]
        if kind == "Point":
            lon, lat = coords
            return Point((float(lat), float(lon)))
        if kind == "LineString":
            return Polyline(tuple((float(lat), float(lon)) for lon, lat in coords))
        if kind == "Polygon":
            if len(coords) != 1:
                raise GridFormatError(f"{where}: polygons with holes are not supported")
            return Polygon(tuple((float(lat), float(lon)) for lon, lat in coords[0]))
    except GridFormatError:
        raise
    except InvalidInputError as exc:
        raise ValidationError(f"{where}: {exc}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise GridFormatError(f"{where}: malformed geometry ({exc})") from exc
    raise GridFormatError(f"{where}: unsupported geometry type {kind!r}")


def grid_to_dict(grid: TerrainGrid) -> dict:
    return {
        "version": GRID_FORMAT_VERSION,
        "datum": grid.datum.value,
        "region": list(grid.region),
        "cell_size_deg": [grid.dlat, grid.dlon],
        "rows": grid.rows,
        "cols": grid.cols,
        "elevation_m": [float(x) for x in grid.elevation.ravel()],
        "land_cover": [int(x) for x in grid.land_cover.ravel()],
        "provenance": [int(x) for x in grid.provenance.ravel()],
        "features": [
            {"id": f.id, "kind": f.kind.value, "geometry": _geometry_to_json(f.geometry)}
            for f in grid.features.values()
        ],
    }


def _field(doc: Mapping, name: str, types, where: str = "grid"):
    if name not in doc:
        raise GridFormatError(f"{where}: missing field {name!r}")
    value = doc[name]
    if not isinstance(value, types) or isinstance(value, bool):
        raise GridFormatError(f"{where}: field {name!r} has type {type(value).__name__}")
    return value


def grid_from_dict(doc: Mapping) -> TerrainGrid:
    if not isinstance(doc, Mapping):
        raise GridFormatError("grid: top level must be an object")
    version = _field(doc, "version", int)
    if version != GRID_FORMAT_VERSION:
        raise UnsupportedVersionError(f"grid format version {version} is not supported")
    try:
        datum = Datum.parse(_field(doc, "datum", str))
    except InvalidInputError as exc:
        raise GridFormatError(f"grid: field 'datum': {exc}") from exc
    region = _field(doc, "region", list)
    cell = _field(doc, "cell_size_deg", list)
    if len(region) != 4 or len(cell) != 2:
        raise GridFormatError("grid: 'region' needs 4 numbers and 'cell_size_deg' 2")
    try:
        lat0, lon0, lat1, lon1 = (float(x) for x in region)
        dlat, dlon = (float(x) for x in cell)
    except (TypeError, ValueError) as exc:
        raise GridFormatError(f"grid: non-numeric region or cell size ({exc})") from exc
    rows = _field(doc, "rows", int)
    cols = _field(doc, "cols", int)
    if rows <= 0 or cols <= 0:
        raise ValidationError("grid: rows and cols must be positive")
    if not (dlat > 0 and dlon > 0):
        raise ValidationError("grid: cell sizes must be positive")
    if rows * cols > MAX_CELLS:
        raise GridTooLargeError(rows * cols, MAX_CELLS)
    tol = 1e-9
    if abs(lat0 + rows * dlat - lat1) > tol or abs(lon0 + cols * dlon - lon1) > tol:
        raise ValidationError("grid: region does not match rows/cols x cell size")

    n = rows * cols
    arrays = {}
    for name in ("elevation_m", "land_cover", "provenance"):
        values = _field(doc, name, list)
        if len(values) != n:
            raise ValidationError(f"grid: {name!r} has {len(values)} entries, rows*cols = {n}")
        arrays[name] = values
    try:
        elev = np.array(arrays["elevation_m"], dtype=float).reshape(rows, cols)
        cover = np.array(arrays["land_cover"], dtype=np.int64).reshape(rows, cols)
        prov = np.array(arrays["provenance"], dtype=np.int64).reshape(rows, cols)
    except (TypeError, ValueError) as exc:
        raise GridFormatError(f"grid: non-numeric array entry ({exc})") from exc
    if not np.all(np.isfinite(elev)):
        raise ValidationError("grid: elevations must be finite")
    bad = set(np.unique(cover).tolist()) - {int(c) for c in LandCover}
    if bad:
        raise ValidationError(f"grid: unknown land-cover codes {sorted(bad)}")
    bad = set(np.unique(prov).tolist()) - {int(c) for c in Provenance}
    if bad:
        raise ValidationError(f"grid: unknown provenance codes {sorted(bad)}")

    feats = {}
    for k, raw in enumerate(_field(doc, "features", list)):
        where = f"features[{k}]"
        if not isinstance(raw, Mapping):
            raise GridFormatError(f"{where}: must be an object")
        fid = _field(raw, "id", int, where)
        try:
            kind = FeatureKind(_field(raw, "kind", str, where))
        except ValueError as exc:
            raise ValidationError(f"{where}: {exc}") from exc
        if fid in feats:
            raise ValidationError(f"{where}: duplicate feature id {fid}")
        feats[fid] = Feature(fid, kind, _geometry_from_json(_field(raw, "geometry", Mapping, where), where))

    return TerrainGrid(
        lat0=lat0,
        lon0=lon0,
        dlat=dlat,
        dlon=dlon,
        rows=rows,
        cols=cols,
        datum=datum,
        elevation=elev,
        land_cover=cover.astype(np.int16),
        provenance=prov.astype(np.int16),
        features=feats,
    )


def save_grid(grid: TerrainGrid, path) -> None:
    Path(path).write_text(json.dumps(grid_to_dict(grid)), encoding="utf-8")


def load_grid(path) -> TerrainGrid:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GridFormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return grid_from_dict(doc)
