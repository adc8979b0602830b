"""Scripted multi-vehicle scenarios on simulated time.

A scenario is a JSON document (version 1)::

    {
      "version": 1,
      "name": "...",
      "seed": 0,
      "tags": {"level": "SYSTEM", "fidelity": "SIL", "complexity": "MODERATE", "challenges": ["C3", "C7"]},
      "terrain": {"kind": "FLAT", "params": {...}}  or  {"path": "grid.json"},
      "camera": {"fov_h_deg": 74, "width_px": 1920, "height_px": 1080},
      "bus": {"latency_mean_s": 0.2, "jitter_s": 0.1, "drop_probability": 0.0},
      "duration_s": 10,
      "agents": [{"id": "a", "position": [lat, lon, alt, "ELLIPSOID_WGS84"],
                  "attitude": {"yaw": 0, "pitch": -45, "roll": 0} | {"quaternion": [x, y, z, w]},
                  "noise": {...} | "preset-name", "auto_stare": true}],
      "script": [{"t": 1.0, "type": "detect_at_pixel", "agent": "a", ...}, ...]
    }

Event types: ``move_to``, ``hover``, ``detect_at_pixel``,
``publish_geolocation``, ``stare_at`` and ``assert``. See
:data:`EVENT_FIELDS` for the accepted keys of each.
"""
from __future__ import annotations

import csv
import heapq
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from ..errors import InvalidInputError, ScenarioValidationError, TerrashadowError, ValidationError
from ..geodesy import Datum, GeodeticPosition, TangentFrame, bearing_deg, haversine_m
from ..geolocate import GeolocationResult, VehicleState, geolocate_detection, geolocate_pixel
from ..optics import DEFAULT_LIMITS, CameraModel, GimbalState, stare_solution, world_to_pixel
from ..terrain import TerrainGrid, TerrainKind, load_grid, synth_terrain
from ..uncertainty import ErrorStats, NoiseModel, PRESETS, TrialRecord, perturb_pixel, perturb_state, summarize
from .bus import BusConfig, Message, MessageBus
from .taxonomy import TestTag

SCENARIO_VERSION = 1

EVENT_FIELDS: dict[str, set[str]] = {
    "move_to": {"position", "duration_s"},
    "hover": {"duration_s"},
    "detect_at_pixel": {"label", "pixel", "bbox", "truth"},
    "publish_geolocation": {"label", "to", "latency_override_s"},
    "stare_at": {"target"},
    "assert": {"check", "target", "tolerance_deg", "label", "truth", "max_m", "expected", "field", "op", "value"},
}
ASSERT_CHECKS = {"heading_to", "detection_error", "reoriented", "received", "bus"}
_OPS = {
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<=": lambda a, b: a <= b,
    ">=": lambda a, b: a >= b,
    "<": lambda a, b: a < b,
    ">": lambda a, b: a > b,
}
DEFAULT_CAMERA = {"fov_h_deg": 74.0, "width_px": 1920, "height_px": 1080}


def _err(where: str, msg: str) -> ScenarioValidationError:
    return ScenarioValidationError(f"{where}: {msg}")


def _number(v, where: str, *, minimum: float | None = None) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise _err(where, f"expected a finite number, got {v!r}")
    if minimum is not None and v < minimum:
        raise _err(where, f"must be >= {minimum}")
    return float(v)


def _position(v, where: str) -> GeodeticPosition:
    if not isinstance(v, (list, tuple)) or len(v) not in (3, 4):
        raise _err(where, "position must be [lat, lon, alt] or [lat, lon, alt, datum]")
    lat, lon, alt = (_number(c, where) for c in v[:3])
    datum = v[3] if len(v) == 4 else Datum.ELLIPSOID_WGS84
    try:
        return GeodeticPosition(lat, lon, alt, datum)
    except InvalidInputError as exc:
        raise _err(where, str(exc)) from None


def _pair(v, where: str, n: int) -> tuple[float, ...]:
    if not isinstance(v, (list, tuple)) or len(v) != n:
        raise _err(where, f"expected {n} numbers")
    return tuple(_number(c, where) for c in v)


@dataclass(frozen=True)
class AgentSpec:
    id: str
    position: GeodeticPosition
    attitude: GimbalState
    noise: NoiseModel = NoiseModel()
    auto_stare: bool = True


@dataclass(frozen=True)
class Event:
    t: float
    type: str
    agent: str | None
    args: Mapping[str, Any]
    index: int


@dataclass(frozen=True)
class Scenario:
    name: str
    terrain: Mapping[str, Any]
    agents: tuple[AgentSpec, ...]
    script: tuple[Event, ...]
    bus: BusConfig = BusConfig()
    seed: int = 0
    tags: TestTag | None = None
    camera: CameraModel = CameraModel(**DEFAULT_CAMERA)
    duration_s: float | None = None
    base_dir: Path | None = None

    def __post_init__(self):
        ids = [a.id for a in self.agents]
        if not ids:
            raise _err("agents", "at least one agent required")
        if len(set(ids)) != len(ids):
            raise _err("agents", "agent ids must be unique")
        known = set(ids)
        for ev in self.script:
            where = f"script[{ev.index}]"
            if ev.type not in EVENT_FIELDS:
                raise _err(where, f"unknown event type {ev.type!r}")
            if ev.agent is not None and ev.agent not in known:
                raise _err(where, f"unknown agent {ev.agent!r}")
            if ev.type != "assert" or ev.args.get("check") in ("heading_to", "reoriented", "received", "detection_error"):
                if ev.agent is None:
                    raise _err(where, "event needs an agent")
            to = ev.args.get("to")
            if to is not None and to not in known:
                raise _err(where, f"unknown recipient {to!r}")
        if self.tags is not None and not self.tags.challenges:
            raise _err("tags", "scenario tags must name at least one challenge")

    @property
    def end_time(self) -> float:
        if self.duration_s is not None:
            return self.duration_s
        return max((ev.t for ev in self.script), default=0.0)

    def terrain_grid(self) -> TerrainGrid:
        spec = self.terrain
        if "path" in spec:
            p = Path(spec["path"])
            if not p.is_absolute() and self.base_dir is not None:
                p = self.base_dir / p
            return load_grid(p)
        return synth_terrain(spec.get("kind", TerrainKind.FLAT), spec.get("params") or {})


def _parse_attitude(doc, where: str) -> GimbalState:
    if not isinstance(doc, Mapping):
        raise _err(where, "attitude must be an object")
    try:
        if "quaternion" in doc:
            return GimbalState.from_quaternion(_pair(doc["quaternion"], where, 4))
        return GimbalState.from_euler(
            _number(doc.get("yaw", 0.0), where), _number(doc.get("pitch", 0.0), where), _number(doc.get("roll", 0.0), where)
        )
    except InvalidInputError as exc:
        raise _err(where, str(exc)) from None


def _parse_noise(doc, where: str) -> NoiseModel:
    if doc is None:
        return NoiseModel()
    if isinstance(doc, str):
        if doc not in PRESETS:
            raise _err(where, f"unknown noise preset {doc!r}")
        return PRESETS[doc]
    try:
        return NoiseModel.from_dict(doc)
    except ValidationError as exc:
        raise _err(where, str(exc)) from None


def _validate_event_args(ev_type: str, args: Mapping, where: str) -> dict:
    out = dict(args)
    extra = set(args) - EVENT_FIELDS[ev_type]
    if extra:
        raise _err(where, f"unknown fields {sorted(extra)} for {ev_type}")
    if ev_type == "move_to":
        if "position" not in args:
            raise _err(where, "move_to needs position")
        out["position"] = _position(args["position"], where)
        out["duration_s"] = _number(args.get("duration_s", 0.0), where, minimum=0.0)
    elif ev_type == "hover":
        out["duration_s"] = _number(args.get("duration_s", 0.0), where, minimum=0.0)
    elif ev_type == "detect_at_pixel":
        if not isinstance(args.get("label"), str):
            raise _err(where, "detect_at_pixel needs a string label")
        sources = [k for k in ("pixel", "bbox") if k in args]
        if len(sources) > 1 or (not sources and "truth" not in args):
            raise _err(where, "give exactly one of pixel or bbox, or a truth position to project")
        if "pixel" in args:
            out["pixel"] = _pair(args["pixel"], where, 2)
        if "bbox" in args:
            out["bbox"] = _pair(args["bbox"], where, 4)
        if "truth" in args:
            out["truth"] = _position(args["truth"], where)
    elif ev_type == "publish_geolocation":
        if not isinstance(args.get("label"), str):
            raise _err(where, "publish_geolocation needs a string label")
        if "to" in args and not isinstance(args["to"], str):
            raise _err(where, "'to' must be a single agent id")
        if "latency_override_s" in args:
            out["latency_override_s"] = _number(args["latency_override_s"], where, minimum=0.0)
    elif ev_type == "stare_at":
        out["target"] = _target(args.get("target"), where)
    elif ev_type == "assert":
        check = args.get("check")
        if check not in ASSERT_CHECKS:
            raise _err(where, f"unknown assertion {check!r}; expected one of {sorted(ASSERT_CHECKS)}")
        if check == "heading_to":
            out["target"] = _target(args.get("target"), where)
            out["tolerance_deg"] = _number(args.get("tolerance_deg", 0.5), where, minimum=0.0)
        elif check == "detection_error":
            if not isinstance(args.get("label"), str):
                raise _err(where, "detection_error needs a label")
            out["truth"] = _position(args.get("truth"), where)
            out["max_m"] = _number(args.get("max_m"), where, minimum=0.0)
        elif check in ("reoriented", "received"):
            if not isinstance(args.get("expected", True), bool):
                raise _err(where, "expected must be true or false")
            if check == "received" and not isinstance(args.get("label"), str):
                raise _err(where, "received needs a label")
        else:
            if args.get("field") not in ("sent", "delivered", "dropped", "in_flight", "reordered"):
                raise _err(where, "bus assertion needs field sent|delivered|dropped|in_flight|reordered")
            if args.get("op", "==") not in _OPS:
                raise _err(where, f"unknown operator {args.get('op')!r}")
            out["value"] = _number(args.get("value"), where)
    return out


def _target(v, where: str):
    if isinstance(v, str):
        kind, _, label = v.partition(":")
        if kind not in ("detection", "received") or not label:
            raise _err(where, "target string must be detection:<label> or received:<label>")
        return (kind, label)
    return _position(v, where)


def scenario_from_dict(doc: Mapping, base_dir: Path | None = None) -> Scenario:
    if not isinstance(doc, Mapping):
        raise _err("scenario", "must be a JSON object")
    if "version" not in doc:
        raise _err("version", "missing")
    if doc["version"] != SCENARIO_VERSION:
        raise _err("version", f"unsupported scenario version {doc['version']!r}")
    extra = set(doc) - {"version", "name", "seed", "tags", "terrain", "camera", "bus", "duration_s", "agents", "script"}
    if extra:
        raise _err("scenario", f"unknown fields {sorted(extra)}")
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise _err("seed", "must be a non-negative integer")
    terrain = doc.get("terrain", {"kind": "FLAT"})
    if not isinstance(terrain, Mapping) or (terrain and not {"kind", "path"} & set(terrain)):
        raise _err("terrain", "needs kind (+ params) or path")
    try:
        cam = CameraModel(**{**DEFAULT_CAMERA, **doc.get("camera", {})})
    except (TypeError, InvalidInputError) as exc:
        raise _err("camera", str(exc)) from None
    try:
        bus = BusConfig.from_dict(doc.get("bus"))
        tags = TestTag.from_dict(doc["tags"]) if "tags" in doc else None
    except (ValidationError, TypeError) as exc:
        raise _err("bus/tags", str(exc)) from None
    agents = []
    raw_agents = doc.get("agents")
    if not isinstance(raw_agents, list):
        raise _err("agents", "must be a list")
    for k, a in enumerate(raw_agents):
        where = f"agents[{k}]"
        if not isinstance(a, Mapping) or not isinstance(a.get("id"), str):
            raise _err(where, "agent needs a string id")
        extra = set(a) - {"id", "position", "attitude", "noise", "auto_stare"}
        if extra:
            raise _err(where, f"unknown fields {sorted(extra)}")
        agents.append(AgentSpec(
            a["id"],
            _position(a.get("position"), where),
            _parse_attitude(a.get("attitude", {}), where),
            _parse_noise(a.get("noise"), where),
            bool(a.get("auto_stare", True)),
        ))
    events = []
    raw_script = doc.get("script", [])
    if not isinstance(raw_script, list):
        raise _err("script", "must be a list")
    for k, e in enumerate(raw_script):
        where = f"script[{k}]"
        if not isinstance(e, Mapping):
            raise _err(where, "event must be an object")
        ev_type = e.get("type")
        if ev_type not in EVENT_FIELDS:
            raise _err(where, f"unknown event type {ev_type!r}")
        t = _number(e.get("t", 0.0), where, minimum=0.0)
        args = {key: v for key, v in e.items() if key not in ("t", "type", "agent")}
        agent = e.get("agent")
        events.append(Event(t, ev_type, agent, _validate_event_args(ev_type, args, where), k))
    duration = doc.get("duration_s")
    if duration is not None:
        duration = _number(duration, "duration_s", minimum=0.0)
    return Scenario(
        str(doc.get("name", "scenario")), dict(terrain), tuple(agents), tuple(events), bus, seed, tags, cam, duration, base_dir
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioValidationError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(doc, base_dir=path.parent)


# --- execution -------------------------------------------------------------------


class _Agent:
    def __init__(self, spec: AgentSpec, noise_seed: int):
        self.spec = spec
        self.id = spec.id
        self.noise = replace(spec.noise, seed=noise_seed)
        self.waypoints: list[tuple[float, GeodeticPosition]] = [(0.0, spec.position)]
        self.attitude = spec.attitude
        self.initial_yaw = spec.attitude.yaw_deg
        self.reoriented = False
        self.detections: dict[str, tuple[float, GeolocationResult]] = {}
        self.received: dict[str, tuple[float, GeodeticPosition]] = {}
        self.detect_count = 0

    def position_at(self, t: float) -> GeodeticPosition:
        wps = self.waypoints
        if t <= wps[0][0]:
            return wps[0][1]
        for (t0, p0), (t1, p1) in zip(wps, wps[1:]):
            if t0 <= t <= t1:
                if t1 == t0:
                    return p1
                f = (t - t0) / (t1 - t0)
                return GeodeticPosition(
                    p0.latitude_deg + f * (p1.latitude_deg - p0.latitude_deg),
                    p0.longitude_deg + f * (p1.longitude_deg - p0.longitude_deg),
                    p0.altitude_m + f * (p1.altitude_m - p0.altitude_m),
                    p0.datum,
                )
        return wps[-1][1]

    def move_to(self, now: float, target: GeodeticPosition, duration: float) -> None:
        here = self.position_at(now)
        self.waypoints = [w for w in self.waypoints if w[0] < now] + [(now, here), (now + duration, target)]

    def hold(self, now: float, duration: float) -> None:
        here = self.position_at(now)
        self.waypoints = [w for w in self.waypoints if w[0] < now] + [(now, here), (now + duration, here)]


@dataclass
class AssertionOutcome:
    index: int
    t: float
    check: str
    passed: bool
    measured: Any
    detail: str = ""

    def to_dict(self) -> dict:
        return {"index": self.index, "t": self.t, "check": self.check, "passed": self.passed, "measured": self.measured, "detail": self.detail}


@dataclass
class ScenarioReport:
    name: str
    seed: int
    tags: TestTag | None
    events: list[dict] = field(default_factory=list)
    assertions: list[AssertionOutcome] = field(default_factory=list)
    bus: dict = field(default_factory=dict)
    final_states: dict[str, dict] = field(default_factory=dict)
    detection_stats: ErrorStats | None = None

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "tags": None if self.tags is None else self.tags.to_dict(),
            "passed": self.passed,
            "events": self.events,
            "assertions": [a.to_dict() for a in self.assertions],
            "bus": self.bus,
            "final_states": self.final_states,
            "detection_stats": None if self.detection_stats is None else self.detection_stats.summary(),
        }

    def to_json(self) -> str:
        return json.dumps(_json_safe(self.to_dict()), sort_keys=True)

    def events_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "agent", "type", "outcome", "detail"])
        for e in self.events:
            w.writerow([repr(e["t"]), e.get("agent") or "", e["type"], e["outcome"], json.dumps(_json_safe(e.get("detail")), sort_keys=True)])
        return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def _angle_diff(a: float, b: float) -> float:
    return abs((a - b + 180.0) % 360.0 - 180.0)


_DELIVERY, _SCRIPT = 0, 1


class _Runner:
    def __init__(self, s: Scenario, grid: TerrainGrid | None):
        self.s = s
        self.grid = grid if grid is not None else s.terrain_grid()
        root = np.random.SeedSequence([s.seed])
        bus_seq, *agent_seqs = root.spawn(1 + len(s.agents))
        self.bus = MessageBus(s.bus, np.random.default_rng(bus_seq))
        self.agents = {
            a.id: _Agent(a, int(seq.generate_state(1)[0])) for a, seq in zip(s.agents, agent_seqs)
        }
        self.report = ScenarioReport(s.name, s.seed, s.tags)
        self.truth_records: list[TrialRecord] = []
        self.queue: list = []
        self._n = 0

    def push(self, t: float, kind: int, payload) -> None:
        self._n += 1
        heapq.heappush(self.queue, (t, kind, self._n, payload))

    def log(self, t, agent, type_, outcome, detail=None):
        self.report.events.append({"t": t, "agent": agent, "type": type_, "outcome": outcome, "detail": detail})

    def run(self) -> ScenarioReport:
        for ev in self.s.script:
            self.push(ev.t, _SCRIPT, ev)
        end = self.s.end_time
        while self.queue and self.queue[0][0] <= end:
            t, kind, _, payload = heapq.heappop(self.queue)
            if kind == _DELIVERY:
                self.deliver(t, payload)
            else:
                getattr(self, "do_" + payload.type)(t, payload)
        self.bus.check_conservation()
        self.report.bus = self.bus.stats.to_dict()
        for aid, a in self.agents.items():
            p = a.position_at(end)
            yaw, pitch, roll = a.attitude.to_euler()
            self.report.final_states[aid] = {
                "position": [p.latitude_deg, p.longitude_deg, p.altitude_m, p.datum.value],
                "yaw_deg": yaw,
                "pitch_deg": pitch,
                "roll_deg": roll,
                "reoriented": a.reoriented,
            }
        if self.truth_records:
            self.report.detection_stats = summarize(self.truth_records)
        return self.report

    # script events

    def do_move_to(self, t, ev):
        a = self.agents[ev.agent]
        a.move_to(t, ev.args["position"], ev.args["duration_s"])
        self.log(t, a.id, ev.type, "ok", {"duration_s": ev.args["duration_s"]})

    def do_hover(self, t, ev):
        a = self.agents[ev.agent]
        a.hold(t, ev.args["duration_s"])
        self.log(t, a.id, ev.type, "ok", {"duration_s": ev.args["duration_s"]})

    def do_detect_at_pixel(self, t, ev):
        a = self.agents[ev.agent]
        cam = self.s.camera
        true_state = VehicleState(a.position_at(t), a.attitude, t)
        label = ev.args["label"]
        truth = ev.args.get("truth")
        if "pixel" in ev.args:
            px = ev.args["pixel"]
        elif "bbox" in ev.args:
            x0, y0, x1, y1 = ev.args["bbox"]
            px = ((x0 + x1) / 2.0, (y0 + y1) / 2.0)
        else:
            d = TangentFrame.at(true_state.position).to_enu(truth)
            px = world_to_pixel(cam, true_state.attitude, d / np.linalg.norm(d))
            if px is None:
                self.log(t, a.id, ev.type, "not_in_view", {"label": label})
                return
        # The vehicle reasons with the pose it logged `latency` seconds ago.
        lagged = VehicleState(a.position_at(max(0.0, t - a.noise.latency_s)), a.attitude, t)
        trial = a.detect_count
        a.detect_count += 1
        believed = perturb_state(lagged, a.noise, trial)
        try:
            if "bbox" in ev.args and a.noise.pixel_sigma_px == 0:
                res = geolocate_detection(self.grid, believed, cam, ev.args["bbox"])
            else:
                res = geolocate_pixel(self.grid, believed, cam, perturb_pixel(cam, px, a.noise, trial))
        except InvalidInputError as exc:
            self.log(t, a.id, ev.type, "rejected", {"label": label, "error": str(exc)})
            return
        detail = {"label": label, "pixel": list(px), "result": res.to_dict()}
        if res.is_hit:
            a.detections[label] = (t, res)
        if truth is not None:
            if res.is_hit:
                rec = TrialRecord(trial, haversine_m(res.hit, truth), abs(res.hit.altitude_m - truth.altitude_m), res.status.value)
                detail["error_m"] = rec.d_haversine_m
            else:
                rec = TrialRecord(trial, math.nan, math.nan, res.status.value)
            self.truth_records.append(rec)
        self.log(t, a.id, ev.type, res.status.value, detail)

    def do_publish_geolocation(self, t, ev):
        a = self.agents[ev.agent]
        label = ev.args["label"]
        if label not in a.detections:
            self.log(t, a.id, ev.type, "nothing_to_publish", {"label": label})
            return
        stamp, res = a.detections[label]
        recipients = [ev.args["to"]] if ev.args.get("to") else [x for x in self.agents if x != a.id]
        for r in recipients:
            msg = self.bus.send(a.id, r, label, (stamp, res.hit), t, ev.args.get("latency_override_s"))
            if msg.deliver_at is None:
                self.log(t, a.id, ev.type, "dropped", {"label": label, "to": r, "seq": msg.seq})
            else:
                self.log(t, a.id, ev.type, "sent", {"label": label, "to": r, "seq": msg.seq, "deliver_at": msg.deliver_at})
                self.push(msg.deliver_at, _DELIVERY, msg)

    def deliver(self, t, msg: Message):
        self.bus.mark_delivered(msg)
        a = self.agents[msg.recipient]
        stamp, pos = msg.payload
        prev = a.received.get(msg.topic)
        if prev is not None and prev[0] >= stamp:
            self.log(t, a.id, "receive", "stale_ignored", {"label": msg.topic, "seq": msg.seq, "stamp": stamp})
            return
        a.received[msg.topic] = (stamp, pos)
        self.log(t, a.id, "receive", "accepted", {"label": msg.topic, "seq": msg.seq, "stamp": stamp})
        if a.spec.auto_stare:
            self.stare(t, a, pos, "auto_stare")

    def resolve_target(self, a: _Agent, target):
        if isinstance(target, GeodeticPosition):
            return target
        kind, label = target
        if kind == "detection":
            hit = a.detections.get(label)
            return None if hit is None else hit[1].hit
        got = a.received.get(label)
        return None if got is None else got[1]

    def stare(self, t, a: _Agent, target: GeodeticPosition, type_: str):
        try:
            cmd = stare_solution(a.position_at(t), target, DEFAULT_LIMITS)
        except InvalidInputError as exc:
            self.log(t, a.id, type_, "rejected", {"error": str(exc)})
            return
        a.attitude = cmd.gimbal_state(DEFAULT_LIMITS)
        a.reoriented = True
        self.log(t, a.id, type_, "ok" if cmd.reachable else "pitch_clamped",
                 {"yaw_deg": cmd.vehicle_yaw_deg, "pitch_deg": cmd.gimbal_pitch_deg})

    def do_stare_at(self, t, ev):
        a = self.agents[ev.agent]
        target = self.resolve_target(a, ev.args["target"])
        if target is None:
            self.log(t, a.id, ev.type, "no_target", {"target": ":".join(ev.args["target"])})
            return
        self.stare(t, a, target, ev.type)

    def do_assert(self, t, ev):
        check = ev.args["check"]
        a = self.agents.get(ev.agent) if ev.agent else None
        if check == "heading_to":
            target = self.resolve_target(a, ev.args["target"])
            if target is None:
                out = AssertionOutcome(ev.index, t, check, False, None, "target unresolved")
            else:
                want = bearing_deg(a.position_at(t), target)
                diff = _angle_diff(a.attitude.yaw_deg, want)
                out = AssertionOutcome(ev.index, t, check, diff <= ev.args["tolerance_deg"], diff,
                                       f"heading {a.attitude.yaw_deg:.3f} vs bearing {want:.3f}")
        elif check == "detection_error":
            got = a.detections.get(ev.args["label"])
            if got is None:
                out = AssertionOutcome(ev.index, t, check, False, None, "no detection")
            else:
                err = haversine_m(got[1].hit, ev.args["truth"])
                out = AssertionOutcome(ev.index, t, check, err <= ev.args["max_m"], err)
        elif check == "reoriented":
            want = ev.args.get("expected", True)
            out = AssertionOutcome(ev.index, t, check, a.reoriented == want, a.reoriented)
        elif check == "received":
            want = ev.args.get("expected", True)
            have = ev.args["label"] in a.received
            out = AssertionOutcome(ev.index, t, check, have == want, have)
        else:
            value = self.bus.stats.to_dict()[ev.args["field"]]
            op = ev.args.get("op", "==")
            out = AssertionOutcome(ev.index, t, check, _OPS[op](value, ev.args["value"]), value,
                                   f"{ev.args['field']} {op} {ev.args['value']}")
        self.report.assertions.append(out)
        self.log(t, ev.agent, "assert", "pass" if out.passed else "fail", {"check": check, "measured": out.measured})


def run_scenario(s: Scenario, grid: TerrainGrid | None = None) -> ScenarioReport:
    """Execute a scenario; ``grid`` overrides the scenario's terrain spec."""
    try:
        return _Runner(s, grid).run()
    except ValidationError:
        raise
    except TerrashadowError as exc:
        raise ScenarioValidationError(f"scenario {s.name!r} could not run: {exc}") from exc
