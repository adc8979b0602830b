"""``terrashadow`` command line.

Exit codes: 0 success, 1 usage error, 2 invalid input or file, 3 a scenario
assertion failed. With ``--format json`` errors are written to stderr as a
single JSON line. Floats are printed with ``repr``, the shortest text that
reads back to the same binary64 value.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .calibration import calibrate_frames
from .errors import TerrashadowError
from .geodesy import Datum, GeodeticPosition
from .geolocate import DEFAULT_MAX_RANGE_M, VehicleState, geolocate_detection, geolocate_pixel
from .harness.scenario import load_scenario, run_scenario
from .harness.suite import builtin_taxonomy, collaborative_detection_doc
from .harness.taxonomy import TestTag, taxonomy_report
from .optics import CALIBRATED_CONVENTION, DEFAULT_LIMITS, CameraModel, GimbalState, stare_solution
from .terrain import DEFAULT_CELL_SIZE_DEG, TerrainKind, load_grid, save_grid, synth_terrain
from .uncertainty import Scene, load_noise, monte_carlo_geolocation

DEFAULT_SEED = 0
EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_ASSERT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage().strip()}\n{self.prog}: error: {message}")


# --- flag parsing -------------------------------------------------------------------


def _floats(text: str, n: int | tuple[int, ...], what: str) -> list[float]:
    parts = text.split(",")
    counts = (n,) if isinstance(n, int) else n
    if len(parts) not in counts:
        raise UsageError(f"{what} expects {' or '.join(map(str, counts))} comma-separated values, got {text!r}")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise UsageError(f"{what}: not a number in {text!r}") from None
    if not all(math.isfinite(v) for v in vals):
        raise UsageError(f"{what}: values must be finite")
    return vals


def _position(text: str, what: str) -> GeodeticPosition:
    parts = text.split(",")
    if len(parts) == 4:
        vals = _floats(",".join(parts[:3]), 3, what)
        return GeodeticPosition(*vals, Datum.parse(parts[3]))
    return GeodeticPosition(*_floats(text, 3, what))


def _resolution(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise UsageError(f"--res expects WxH, got {text!r}") from None


def _camera(args) -> CameraModel:
    w, h = _resolution(args.res)
    return CameraModel(args.fov_h, w, h)


def _attitude(args) -> GimbalState:
    if args.quat and args.euler:
        raise UsageError("give --quat or --euler, not both")
    if args.quat:
        return GimbalState.from_quaternion(_floats(args.quat, 4, "--quat"))
    if args.euler:
        return GimbalState.from_euler(*_floats(args.euler, (2, 3), "--euler"))
    raise UsageError("an attitude is required: --quat X,Y,Z,W or --euler YAW,PITCH[,ROLL]")


def _grid_for(args, drone: GeodeticPosition):
    if args.grid and args.flat_elev is not None:
        raise UsageError("give --grid or --flat-elev, not both")
    if args.grid:
        return load_grid(args.grid)
    if args.flat_elev is not None:
        return synth_terrain(
            TerrainKind.FLAT,
            center=(drone.latitude_deg, drone.longitude_deg),
            base_elevation_m=args.flat_elev,
            extent_m=args.extent_m,
            datum=drone.datum,
        )
    raise UsageError("terrain is required: --grid PATH or --flat-elev METERS")


def _target_pixel(args) -> dict:
    if bool(args.pixel) == bool(args.bbox):
        raise UsageError("give exactly one of --pixel X,Y or --bbox X0,Y0,X1,Y1")
    if args.pixel:
        return {"pixel": tuple(_floats(args.pixel, 2, "--pixel"))}
    return {"bbox": tuple(_floats(args.bbox, 4, "--bbox"))}


# --- output -------------------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _flatten(obj, prefix="") -> list[tuple[str, Any]]:
    if isinstance(obj, dict):
        out = []
        for k, v in obj.items():
            out += _flatten(v, f"{prefix}{k}.")
        return out
    if isinstance(obj, list) and any(isinstance(x, (dict, list)) for x in obj):
        out = []
        for i, v in enumerate(obj):
            out += _flatten(v, f"{prefix}{i}.")
        return out
    return [(prefix.rstrip("."), obj)]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if v is None:
        return "null"
    return str(v)


def _emit(args, payload: dict, out=None) -> None:
    out = out or sys.stdout
    payload = _clean(payload)
    fmt = getattr(args, "format", "json")
    if fmt == "json":
        text = json.dumps(payload, sort_keys=True) + "\n"
    elif fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["key", "value"])
        for k, v in _flatten(payload):
            w.writerow([k, _fmt(v)])
        text = buf.getvalue()
    else:
        rows = _flatten(payload)
        width = max((len(k) for k, _ in rows), default=0)
        text = "".join(f"{k:<{width}}  {_fmt(v)}\n" for k, v in rows)
    if getattr(args, "out", None) and out is sys.stdout:
        Path(args.out).write_text(text)
    else:
        out.write(text)


def _pos_dict(p: GeodeticPosition) -> dict:
    return {"latitude_deg": p.latitude_deg, "longitude_deg": p.longitude_deg, "altitude_m": p.altitude_m, "datum": p.datum.value}


# --- subcommands ---------------------------------------------------------------------


def cmd_terrain_gen(args) -> int:
    params: dict[str, Any] = {
        "base_elevation_m": args.elev,
        "extent_m": args.extent_m,
        "cell_size_deg": args.cell_size_deg,
        "datum": Datum.parse(args.datum),
    }
    if args.center:
        params["center"] = tuple(_floats(args.center, 2, "--center"))
    for item in args.param or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise UsageError(f"--param expects KEY=VALUE, got {item!r}")
        try:
            params[key] = json.loads(val)
        except json.JSONDecodeError:
            params[key] = val
    grid = synth_terrain(TerrainKind(args.kind.upper()), params)
    if not args.out:
        raise UsageError("terrain gen needs --out PATH")
    save_grid(grid, args.out)
    _emit(argparse.Namespace(format=args.format), _grid_info(grid) | {"path": args.out})
    return EXIT_OK


def _grid_info(grid) -> dict:
    return {
        "rows": grid.rows,
        "cols": grid.cols,
        "region": list(grid.region),
        "cell_size_deg": [grid.dlat, grid.dlon],
        "cell_size_m": list(grid.cell_size_m),
        "datum": grid.datum.value,
        "min_elevation_m": grid.min_elevation,
        "max_elevation_m": grid.max_elevation,
        "features": len(grid.features),
    }


def cmd_terrain_info(args) -> int:
    path = args.grid or args.path
    if not path:
        raise UsageError("terrain info needs --grid PATH")
    _emit(args, _grid_info(load_grid(path)))
    return EXIT_OK


def cmd_geolocate(args) -> int:
    drone = _position(args.drone, "--drone")
    state = VehicleState(drone, _attitude(args))
    cam = _camera(args)
    grid = _grid_for(args, drone)
    target = _target_pixel(args)
    if "pixel" in target:
        res = geolocate_pixel(grid, state, cam, target["pixel"], args.max_range)
    else:
        res = geolocate_detection(grid, state, cam, target["bbox"], args.max_range)
    _emit(args, res.to_dict())
    return EXIT_OK


def cmd_stare(args) -> int:
    drone = _position(args.drone, "--drone")
    target = _position(args.target, "--target")
    cmd = stare_solution(drone, target, DEFAULT_LIMITS)
    q = cmd.gimbal_state(DEFAULT_LIMITS).orientation_q
    _emit(args, {
        "vehicle_yaw_deg": cmd.vehicle_yaw_deg,
        "gimbal_pitch_deg": cmd.gimbal_pitch_deg,
        "gimbal_roll_deg": cmd.gimbal_roll_deg,
        "reachable": cmd.reachable,
        "quaternion_xyzw": list(q),
    })
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    drone = _position(args.drone, "--drone")
    state = VehicleState(drone, _attitude(args))
    cam = _camera(args)
    grid = _grid_for(args, drone)
    scene = Scene(state, cam, **_target_pixel(args))
    if args.truth:
        truth = _position(args.truth, "--truth")
    else:
        nominal = geolocate_pixel(grid, state, cam, scene.target_pixel, DEFAULT_MAX_RANGE_M)
        if not nominal.is_hit:
            raise TerrashadowError(f"noise-free ray misses the terrain ({nominal.status.value}); pass --truth")
        truth = nominal.hit
    noise = load_noise(args.noise)
    stats = monte_carlo_geolocation(grid, scene, truth, noise, args.trials, seed=args.seed)
    if args.csv:
        Path(args.csv).write_text(stats.to_csv())
    if args.format == "csv" and not args.csv:
        text = stats.to_csv()
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    _emit(args, stats.summary() | {"truth": _pos_dict(truth), "seed": args.seed, "noise": noise.to_dict()})
    return EXIT_OK


def cmd_scenario_run(args) -> int:
    scenario = load_scenario(args.path)
    report = run_scenario(scenario)
    if args.csv:
        Path(args.csv).write_text(report.events_csv())
    if args.format == "csv":
        text = report.events_csv()
        (Path(args.out).write_text(text) if args.out else sys.stdout.write(text))
    elif args.format == "json":
        text = report.to_json() + "\n"
        (Path(args.out).write_text(text) if args.out else sys.stdout.write(text))
    else:
        summary = {
            "name": report.name,
            "passed": report.passed,
            "bus": report.bus,
            "assertions": [f"{a.check}@{a.t}: {'pass' if a.passed else 'FAIL'} ({_fmt(a.measured)})" for a in report.assertions],
        }
        _emit(args, summary)
    return EXIT_OK if report.passed else EXIT_ASSERT


def cmd_scenario_example(args) -> int:
    text = json.dumps(collaborative_detection_doc(), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_report(args) -> int:
    if args.results:
        try:
            doc = json.loads(Path(args.results).read_text())
        except json.JSONDecodeError as exc:
            raise TerrashadowError(f"{args.results}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        if not isinstance(doc, list):
            raise TerrashadowError("results file must be a JSON list of {tags, passed}")
        rows = [(TestTag.from_dict(r.get("tags", {})), bool(r.get("passed"))) for r in doc]
        rep = taxonomy_report(rows)
        checks = []
    else:
        results, rep = builtin_taxonomy()
        checks = [{"name": r.name, "passed": r.passed, "detail": r.detail, "tags": r.tag.to_dict()} for r in results]
    if args.format == "table":
        text = rep.to_table() + "\n"
        if checks:
            text += "\n" + "".join(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}: {c['detail']}\n" for c in checks)
        (Path(args.out).write_text(text) if args.out else sys.stdout.write(text))
    else:
        _emit(args, rep.to_dict() | {"checks": checks})
    return EXIT_OK


def cmd_calibrate(args) -> int:
    report = calibrate_frames()
    matches = [{"convention": m.convention.describe(), "residual_m": m.residual_m} for m in report.matches]
    payload = {
        "candidates": len(report.candidates),
        "tolerance_m": report.tolerance_m,
        "matches": matches,
        "library_convention": CALIBRATED_CONVENTION.describe(),
    }
    if len(report.matches) != 1:
        payload["error"] = "ambiguous or missing calibration"
        _emit(args, payload)
        return EXIT_INVALID
    sel = report.selected
    payload |= {
        "selected": sel.convention.describe(),
        "residual_m": sel.residual_m,
        "agrees_with_library": sel.convention == CALIBRATED_CONVENTION,
    }
    _emit(args, payload)
    return EXIT_OK if sel.convention == CALIBRATED_CONVENTION else EXIT_INVALID


# --- parser ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--format", choices=("json", "csv", "table"), default="json")
    common.add_argument("--out", metavar="PATH")

    scene = _Parser(add_help=False)
    scene.add_argument("--grid", metavar="PATH")
    scene.add_argument("--flat-elev", type=float, metavar="M", help="synthesize flat terrain at this elevation instead of --grid")
    scene.add_argument("--extent-m", type=float, default=600.0, help="side of the synthesized flat terrain")
    scene.add_argument("--drone", required=True, metavar="LAT,LON,ALT[,DATUM]")
    scene.add_argument("--quat", metavar="X,Y,Z,W", help="gimbal quaternion, scalar last, body(FLU)->ENU")
    scene.add_argument("--euler", metavar="YAW,PITCH[,ROLL]", help="vehicle yaw and gimbal pitch/roll, degrees")
    scene.add_argument("--fov-h", type=float, default=74.0, metavar="DEG")
    scene.add_argument("--res", default="1920x1080", metavar="WxH")
    scene.add_argument("--pixel", metavar="X,Y")
    scene.add_argument("--bbox", metavar="X0,Y0,X1,Y1")

    p = _Parser(prog="terrashadow", description="Terrain-aware geolocation toolkit.")
    p.add_argument("--version", action="version", version=f"terrashadow {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    terrain = sub.add_parser("terrain", help="generate or inspect terrain grids")
    tsub = terrain.add_subparsers(dest="terrain_command", required=True, parser_class=_Parser)
    gen = tsub.add_parser("gen", parents=[common], help="write a synthetic terrain grid")
    gen.add_argument("--kind", default="flat", type=str.lower, choices=[k.value.lower() for k in TerrainKind])
    gen.add_argument("--elev", type=float, default=274.0, help="base elevation, meters")
    gen.add_argument("--extent-m", type=float, default=600.0)
    gen.add_argument("--cell-size-deg", type=float, default=DEFAULT_CELL_SIZE_DEG)
    gen.add_argument("--center", metavar="LAT,LON")
    gen.add_argument("--datum", default=Datum.ELLIPSOID_WGS84.value)
    gen.add_argument("--param", action="append", metavar="KEY=VALUE", help="extra generator parameter (repeatable)")
    gen.set_defaults(func=cmd_terrain_gen)
    info = tsub.add_parser("info", parents=[common], help="summarize a grid file")
    info.add_argument("path", nargs="?")
    info.add_argument("--grid", metavar="PATH")
    info.set_defaults(func=cmd_terrain_info)

    g = sub.add_parser("geolocate", parents=[common, scene], help="cast a pixel into the terrain")
    g.add_argument("--max-range", type=float, default=DEFAULT_MAX_RANGE_M, metavar="M")
    g.set_defaults(func=cmd_geolocate)

    s = sub.add_parser("stare", parents=[common], help="yaw and gimbal pitch that centre a target")
    s.add_argument("--drone", required=True, metavar="LAT,LON,ALT[,DATUM]")
    s.add_argument("--target", required=True, metavar="LAT,LON,ALT[,DATUM]")
    s.set_defaults(func=cmd_stare)

    m = sub.add_parser("montecarlo", parents=[common, scene], help="propagate sensor noise through geolocation")
    m.add_argument("--noise", default="zero", metavar="PATH|PRESET")
    m.add_argument("--trials", type=int, default=1000)
    m.add_argument("--seed", type=int, default=DEFAULT_SEED)
    m.add_argument("--truth", metavar="LAT,LON,ALT[,DATUM]", help="default: the noise-free geolocation")
    m.add_argument("--csv", metavar="PATH", help="also write per-trial records")
    m.set_defaults(func=cmd_montecarlo)

    sc = sub.add_parser("scenario", help="run scripted scenarios")
    scsub = sc.add_subparsers(dest="scenario_command", required=True, parser_class=_Parser)
    run = scsub.add_parser("run", parents=[common])
    run.add_argument("path")
    run.add_argument("--csv", metavar="PATH", help="also write the per-event table")
    run.set_defaults(func=cmd_scenario_run)
    ex = scsub.add_parser("example", parents=[common], help="print the builtin collaborative-detection scenario")
    ex.set_defaults(func=cmd_scenario_example)

    r = sub.add_parser("report", parents=[common], help="test-taxonomy coverage matrix")
    r.add_argument("--results", metavar="PATH", help="JSON list of {tags, passed}; default runs the builtin suite")
    r.set_defaults(func=cmd_report)

    c = sub.add_parser("calibrate-frames", parents=[common], help="re-derive the gimbal frame convention")
    c.set_defaults(func=cmd_calibrate)
    return p


def _wants_json(argv: Sequence[str]) -> bool:
    argv = list(argv)
    if "--format=json" in argv:
        return True
    for i, a in enumerate(argv[:-1]):
        if a == "--format":
            return argv[i + 1] == "json"
    return not any(a.startswith("--format") for a in argv)


def _fail(argv, code: int, kind: str, message: str) -> int:
    if _wants_json(argv):
        sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    else:
        sys.stderr.write(f"terrashadow: {kind}: {message}\n")
    return code


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        if args.command == "montecarlo" and args.trials < 1:
            raise UsageError("--trials must be >= 1")
        return args.func(args)
    except UsageError as exc:
        return _fail(argv, EXIT_USAGE, "usage", str(exc))
    except (TerrashadowError, ValueError, OSError) as exc:
        return _fail(argv, EXIT_INVALID, type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
