"""Terrain-aware digital shadow: terrain grids, ray-cast geolocation and error analysis."""
from .errors import (
    DatumMismatchError,
    GridFormatError,
    GridTooLargeError,
    InvalidInputError,
    OutOfRegionError,
    ScenarioValidationError,
    TerrashadowError,
    UnsupportedVersionError,
    ValidationError,
)
from .geodesy import Datum, EcefVector, GeodeticPosition, TangentFrame, datum_convert, ecef_to_lla, haversine_m, lla_to_ecef
from .geolocate import GeolocationResult, GeolocationStatus, VehicleState, cast_ray, geolocate_detection, geolocate_pixel
from .optics import CALIBRATED_CONVENTION, CameraModel, GimbalState, StareCommand, stare_solution
from .spatial_index import StrTree, build_str_tree
from .terrain import ElevationMode, LandCover, TerrainGrid, TerrainKind, build_grid, elevation_at, load_grid, merge_layers, save_grid, synth_terrain
from .uncertainty import ErrorStats, NoiseModel, analytic_bias_error, monte_carlo_geolocation, perturb_state

__version__ = "0.1.0"
