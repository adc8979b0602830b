import json
import math

import numpy as np
import pytest
import shapely.geometry as sg
from hypothesis import given, settings, strategies as st

from fusion_cases import FUSION_CHECKS, base_grid
from terrashadow.errors import (
    GridFormatError,
    GridTooLargeError,
    InvalidInputError,
    OutOfRegionError,
    UnsupportedVersionError,
    ValidationError,
)
from terrashadow.spatial_index import Point, Polygon, Polyline
from terrashadow.terrain import (
    ElevationMode,
    Feature,
    FeatureKind,
    LandCover,
    Provenance,
    TerrainKind,
    build_grid,
    elevation_at,
    grid_from_dict,
    grid_to_dict,
    load_grid,
    merge_layers,
    query_point,
    save_grid,
    synth_surface,
    synth_terrain,
)

REGION = (36.0, -96.0, 36.001, -95.999)


def slope(lat, lon):
    return 200.0 + 50_000.0 * (lat - 36.0) + 20_000.0 * (lon + 96.0)


def test_single_cell_grid():
    g = build_grid((36.0, -96.0, 36.0001, -95.9999), 1e-4, lambda lat, lon: 274.0)
    assert g.shape == (1, 1)
    assert g.elevation[0, 0] == 274.0
    assert elevation_at(g, 36.00005, -95.99995) == 274.0
    assert elevation_at(g, 36.00001, -95.99999, "bilinear") == 274.0


def test_slope_grid_monotone():
    g = build_grid(REGION, 1e-4, slope)
    assert g.shape == (10, 10)
    assert np.all(np.diff(g.elevation, axis=0) > 0)
    assert np.all(np.diff(g.elevation, axis=1) > 0)


def test_grid_bbox_within_one_cell():
    region = (36.0, -96.0, 36.00105, -95.99893)
    g = build_grid(region, 1e-4, slope)
    for got, want in zip(g.region, region):
        assert abs(got - want) < 1e-4
    assert g.region[2] >= region[2] and g.region[3] >= region[3]


def test_builder_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        build_grid((36.0, -96.0, 36.0, -95.0), 1e-4, slope)
    with pytest.raises(InvalidInputError):
        build_grid(REGION, 0.0, slope)
    with pytest.raises(InvalidInputError):
        build_grid(REGION, 1e-4, None)
    with pytest.raises(ValidationError):
        build_grid(REGION, 1e-4, lambda lat, lon: math.nan)


def test_grid_too_large():
    with pytest.raises(GridTooLargeError) as info:
        build_grid((0.0, 0.0, 10.0, 10.0), 1e-3, slope)
    assert info.value.count == 10_000 * 10_000


def test_vectorized_sampler_matches_scalar():
    a = build_grid(REGION, 1e-4, slope)
    b = build_grid(REGION, 1e-4, slope, vectorized=True)
    assert a.elevation.tobytes() == b.elevation.tobytes()


def test_centroid_query_both_modes():
    g = build_grid(REGION, 1e-4, slope)
    for i, j in [(0, 0), (3, 7), (9, 9)]:
        lat, lon = g.centroid_lats[i], g.centroid_lons[j]
        assert elevation_at(g, lat, lon, ElevationMode.NEAREST) == g.elevation[i, j]
        assert elevation_at(g, lat, lon, ElevationMode.BILINEAR) == pytest.approx(g.elevation[i, j], abs=1e-9)


def test_bilinear_midpoint_268_274():
    g = build_grid((36.0, -96.0, 36.0001, -95.9998), 1e-4, lambda lat, lon: 268.0 if lon < -95.9999 else 274.0)
    assert g.elevation.tolist() == [[268.0, 274.0]]
    assert elevation_at(g, 36.00005, -95.9999, "BILINEAR") == pytest.approx(271.0, abs=1e-9)


def test_out_of_region_raises():
    g = build_grid(REGION, 1e-4, slope)
    with pytest.raises(OutOfRegionError):
        elevation_at(g, 35.9, -96.0)
    with pytest.raises(OutOfRegionError):
        query_point(g, 36.0005, -95.5)


def test_nearest_matches_brute_force():
    g = build_grid((36.0, -96.0, 36.003, -95.9975), (1e-4, 1.25e-4), slope)
    clat, clon = np.meshgrid(g.centroid_lats, g.centroid_lons, indexing="ij")
    rng = np.random.default_rng(21)
    lo, hi = g.region[:2], g.region[2:]
    for lat, lon in zip(rng.uniform(lo[0], hi[0], 1000), rng.uniform(lo[1], hi[1], 1000)):
        d = np.hypot(clat - lat, clon - lon)
        k = int(np.argmin(d))
        assert elevation_at(g, lat, lon) == g.elevation.flat[k]


def test_bilinear_between_corner_values():
    g = build_grid(REGION, 1e-4, slope)
    rng = np.random.default_rng(22)
    for lat, lon in zip(rng.uniform(36.0, 36.001, 300), rng.uniform(-96.0, -95.999, 300)):
        z = elevation_at(g, lat, lon, "BILINEAR")
        assert g.min_elevation - 1e-9 <= z <= g.max_elevation + 1e-9


@settings(max_examples=100, deadline=None)
@given(st.floats(0.02, 0.98), st.integers(1, 9), st.floats(1e-9, 1e-7))
def test_bilinear_continuous_across_cell_edges(frac, k, eps):
    g = synth_terrain("PEAKS", extent_m=200.0, seed=3)
    lat0, lon0, lat1, lon1 = g.region
    lat = lat0 + frac * (lat1 - lat0)
    edge = g.lon0 + k * g.dlon
    a = elevation_at(g, lat, edge - eps, "BILINEAR")
    b = elevation_at(g, lat, edge + eps, "BILINEAR")
    # Steepest finite difference between neighbouring centroids, per degree.
    max_slope = max(np.abs(np.diff(g.elevation, axis=0)).max() / g.dlat,
                    np.abs(np.diff(g.elevation, axis=1)).max() / g.dlon)
    assert abs(a - b) <= 10 * max_slope * 2 * eps


# --- features --------------------------------------------------------------


def road_grid(features):
    return build_grid(REGION, 1e-4, slope, features=features)


def test_road_crossing_cell():
    road = Polyline(((36.00005, -95.99995), (36.00095, -95.99905)))
    g = road_grid([Feature(7, FeatureKind.ROAD, road)])
    info = query_point(g, 36.00055, -95.99945)
    assert (info.row, info.col) == (5, 5)
    assert info.features == (7,)
    assert info.land_cover is LandCover.BACKGROUND and info.provenance is Provenance.BASE_USGS
    far = query_point(g, 36.00095, -95.99995)
    assert far.features == ()


def _random_feature(rng, fid):
    kind = list(FeatureKind)[rng.integers(3)]
    lat, lon = rng.uniform(36.0, 36.001), rng.uniform(-96.0, -95.999)
    shape = rng.integers(3)
    if shape == 0:
        return Feature(fid, kind, Point((lat, lon)))
    if shape == 1:
        pts = [(lat, lon)] + [(lat + rng.uniform(-3e-4, 3e-4), lon + rng.uniform(-3e-4, 3e-4)) for _ in range(rng.integers(1, 4))]
        return Feature(fid, kind, Polyline(tuple(pts)))
    w, h = rng.uniform(1e-5, 3e-4, 2)
    return Feature(fid, kind, Polygon(((lat, lon), (lat + h, lon), (lat + h, lon + w), (lat, lon + w))))


def _to_shapely(geom):
    if isinstance(geom, Point):
        return sg.Point(geom.vertex)
    if isinstance(geom, Polyline):
        return sg.LineString(geom.vertices)
    return sg.Polygon(geom.vertices)


def test_feature_attribution_matches_brute_force():
    rng = np.random.default_rng(23)
    for _ in range(5):
        feats = [_random_feature(rng, fid) for fid in range(25)]
        g = road_grid(feats)
        for i in range(g.rows):
            for j in range(g.cols):
                a, b, c, d = g.cell_bbox(i, j)
                cell = sg.box(a, b, c, d)
                want = tuple(f.id for f in feats if _to_shapely(f.geometry).intersects(cell))
                assert g.features_in_cell(i, j) == want


def test_duplicate_feature_ids_rejected():
    f = Feature(1, "road", Point((36.0005, -95.9995)))
    with pytest.raises(InvalidInputError):
        road_grid([f, f])


# --- fusion ----------------------------------------------------------------


@pytest.mark.parametrize("name", list(FUSION_CHECKS))
def test_fusion_rules(name):
    assert FUSION_CHECKS[name]()


def test_fusion_background_keeps_base():
    base = base_grid()
    out = merge_layers(base, np.zeros(base.shape, dtype=int))
    assert np.array_equal(out.land_cover, base.land_cover)
    assert np.array_equal(out.provenance, base.provenance)
    assert out.features == base.features


def test_fusion_rejects_bad_rasters():
    base = base_grid()
    with pytest.raises(InvalidInputError):
        merge_layers(base, np.zeros((3, 3), dtype=int))
    bad = np.zeros(base.shape, dtype=int)
    bad[1, 1] = LandCover.CROPLAND
    with pytest.raises(InvalidInputError):
        merge_layers(base, bad)


def test_grid_arrays_are_read_only():
    g = base_grid()
    with pytest.raises(ValueError):
        g.elevation[0, 0] = 0.0


# --- synthetic terrain -------------------------------------------------------


def test_flat_at_274():
    g = synth_terrain("FLAT", base_elevation_m=274.0, ripple_m=1.0)
    assert g.elevation.min() >= 273.5 and g.elevation.max() <= 274.5
    assert np.ptp(g.elevation) > 0.5


def test_gully_depth():
    g = synth_terrain(TerrainKind.GULLY, depth_m=6.0)
    assert np.ptp(g.elevation) >= 6.0


def test_hill_rise():
    g = synth_terrain("hill", rise_m=16.0)
    assert np.ptp(g.elevation) == pytest.approx(16.0, rel=0.01)


def test_ridge_crest_between_centroids():
    s = synth_surface("RIDGE", height_m=10.0, half_width_m=3.0)
    g = synth_terrain("RIDGE", height_m=10.0, half_width_m=3.0)
    assert s.params["crest_offset_m"] is not None
    # The sampled grid sees much less than the real crest height.
    assert g.elevation.max() < 274.0 + 10.0 - 1.0


def test_synthetic_deterministic():
    for kind in TerrainKind:
        a, b = synth_terrain(kind, extent_m=150.0), synth_terrain(kind, extent_m=150.0)
        assert a.elevation.tobytes() == b.elevation.tobytes()
    assert synth_terrain("PEAKS", seed=1, extent_m=150.0).elevation.tobytes() != \
        synth_terrain("PEAKS", seed=2, extent_m=150.0).elevation.tobytes()


def test_synthetic_rejects_unknown_param():
    with pytest.raises(InvalidInputError):
        synth_terrain("FLAT", roughness=3)
    with pytest.raises(InvalidInputError):
        synth_terrain("FLAT", ripple_m=2.0)


# --- file format -----------------------------------------------------------


def sample_grid():
    feats = [
        Feature(1, FeatureKind.ROAD, Polyline(((36.00005, -95.99995), (36.00095, -95.99905)))),
        Feature(2, FeatureKind.WATER, Polygon(((36.0001, -95.9999), (36.0002, -95.9999), (36.0002, -95.9998)))),
        Feature(3, FeatureKind.TRAIL, Point((36.0007, -95.9993))),
    ]
    g = build_grid(REGION, 1e-4, lambda lat, lon: slope(lat, lon) / 3.0, lambda lat, lon: LandCover.WOODLAND,
                   features=feats, datum="AMSL")
    cv = np.zeros(g.shape, dtype=int)
    cv[4, 4] = LandCover.BUILDING
    return merge_layers(g, cv)


def test_save_load_roundtrip(tmp_path):
    g = sample_grid()
    path = tmp_path / "g.json"
    save_grid(g, path)
    h = load_grid(path)
    assert h.elevation.tobytes() == g.elevation.tobytes()
    assert np.array_equal(h.land_cover, g.land_cover)
    assert np.array_equal(h.provenance, g.provenance)
    assert h.region == g.region and h.datum == g.datum
    assert h.features == g.features
    assert grid_to_dict(h) == grid_to_dict(g)


def test_truncated_file(tmp_path):
    path = tmp_path / "g.json"
    save_grid(sample_grid(), path)
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(GridFormatError):
        load_grid(path)


def test_unknown_version():
    doc = grid_to_dict(sample_grid())
    doc["version"] = 99
    with pytest.raises(UnsupportedVersionError):
        grid_from_dict(doc)


@pytest.mark.parametrize(
    "mutate, err",
    [
        (lambda d: d["elevation_m"].pop(), ValidationError),
        (lambda d: d.pop("rows"), GridFormatError),
        (lambda d: d.__setitem__("rows", "10"), GridFormatError),
        (lambda d: d.__setitem__("datum", "GEOID"), GridFormatError),
        (lambda d: d["land_cover"].__setitem__(0, 99), ValidationError),
        (lambda d: d["features"].append(dict(d["features"][0])), ValidationError),
        (lambda d: d["features"][0]["geometry"].__setitem__("type", "Circle"), GridFormatError),
        (lambda d: d.__setitem__("region", [36.0, -96.0, 36.002, -95.999]), ValidationError),
    ],
)
def test_malformed_documents(mutate, err):
    doc = json.loads(json.dumps(grid_to_dict(sample_grid())))
    mutate(doc)
    with pytest.raises(err):
        grid_from_dict(doc)
