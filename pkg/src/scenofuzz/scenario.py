"""Scenario documents: the unit every search algorithm mutates and executes.

A scenario pins one ego mission on a named map plus a concrete cast of NPC
vehicles and static obstacles.  Scenarios serialize to canonical JSON
(``schema_version`` 1) so equal configs always hash identically.

The mutable view of a scenario is a flat ``ParameterVector``; the gene layout
is derived from a template config, and ``flatten``/``unflatten`` convert
between the two representations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any

from . import canonical
from .geometry import Pose, left_normal
from .lanemap import LaneMap

SCHEMA_VERSION = 1

# actor kinds the format reserves; only vehicles are simulated today
KNOWN_ACTOR_KINDS = ("vehicle",)


class ScenarioFormatError(ValueError):
    """Raised by from_json when a document violates the scenario schema."""


@dataclass(frozen=True)
class BodyDims:
    length: float = 4.8
    width: float = 2.0


@dataclass(frozen=True)
class EgoSpec:
    start_lane_id: str
    start_station: float
    end_lane_id: str
    end_station: float
    body: BodyDims = field(default_factory=BodyDims)


@dataclass(frozen=True)
class NpcSpec:
    actor_id: str
    waypoints: tuple[Pose, ...]
    target_speeds: tuple[float, ...]
    spawn_delay: float = 0.0
    body: BodyDims = field(default_factory=BodyDims)


@dataclass(frozen=True)
class ObstacleSpec:
    actor_id: str
    pose: Pose
    body: BodyDims = field(default_factory=BodyDims)


@dataclass(frozen=True)
class ScenarioConfig:
    scenario_id: str
    map_name: str
    ego: EgoSpec
    npc_vehicles: tuple[NpcSpec, ...] = ()
    obstacles: tuple[ObstacleSpec, ...] = ()
    duration_limit: float = 45.0


@dataclass(frozen=True)
class Violation:
    code: str
    subject: str
    message: str


# ---------------------------------------------------------------------------
# validation

MAX_BODY_DIM = 20.0
MAX_TARGET_SPEED = 30.0


def _check_body(body: BodyDims, subject: str, out: list[Violation]) -> None:
    if not (0.0 < body.width <= body.length <= MAX_BODY_DIM):
        out.append(Violation(
            "BadBody", subject,
            f"require 0 < width <= length <= {MAX_BODY_DIM}, "
            f"got length={body.length} width={body.width}"))


def validate(config: ScenarioConfig, lane_map: LaneMap) -> list[Violation]:
    """All invariant violations of a scenario against a map; empty == valid."""
    out: list[Violation] = []
    if config.duration_limit <= 0:
        out.append(Violation("NonPositiveDuration", config.scenario_id,
                             f"duration_limit={config.duration_limit}"))

    ids = ["ego"] + [n.actor_id for n in config.npc_vehicles] + \
        [o.actor_id for o in config.obstacles]
    seen: set[str] = set()
    for actor_id in ids:
        if actor_id in seen:
            out.append(Violation("DuplicateActorId", actor_id, "actor id used twice"))
        seen.add(actor_id)

    ego = config.ego
    _check_body(ego.body, "ego", out)
    for which, lane_id, station in (("start", ego.start_lane_id, ego.start_station),
                                    ("end", ego.end_lane_id, ego.end_station)):
        if lane_id not in lane_map.lanes:
            out.append(Violation("UnknownLane", "ego", f"{which} lane {lane_id!r}"))
        else:
            length = lane_map.lanes[lane_id].length
            if not (0.0 <= station <= length):
                out.append(Violation(
                    "StationOutOfRange", "ego",
                    f"{which}_station={station} outside [0, {length:.3f}] of {lane_id!r}"))

    for npc in config.npc_vehicles:
        _check_body(npc.body, npc.actor_id, out)
        if len(npc.waypoints) < 2:
            out.append(Violation("TooFewWaypoints", npc.actor_id,
                                 f"{len(npc.waypoints)} waypoints, need >= 2"))
        else:
            for a, b in zip(npc.waypoints, npc.waypoints[1:]):
                if math.hypot(b.x - a.x, b.y - a.y) < 1e-3:
                    out.append(Violation("WaypointSpacing", npc.actor_id,
                                         "consecutive waypoints coincide"))
                    break
        if len(npc.target_speeds) != max(len(npc.waypoints) - 1, 0):
            out.append(Violation(
                "SpeedCountMismatch", npc.actor_id,
                f"{len(npc.target_speeds)} speeds for {len(npc.waypoints)} waypoints"))
        for v in npc.target_speeds:
            if not (0.0 <= v <= MAX_TARGET_SPEED):
                out.append(Violation("SpeedOutOfRange", npc.actor_id,
                                     f"target speed {v} outside [0, {MAX_TARGET_SPEED}]"))
                break
        if npc.spawn_delay < 0:
            out.append(Violation("NegativeSpawnDelay", npc.actor_id,
                                 f"spawn_delay={npc.spawn_delay}"))
    for obs in config.obstacles:
        _check_body(obs.body, obs.actor_id, out)

    out.extend(_initial_overlaps(config, lane_map))
    return out


def _initial_overlaps(config: ScenarioConfig, lane_map: LaneMap) -> list[Violation]:
    # import here: the simulator is a leaf module, scenario sits above it
    from .simulator import obb_distance

    boxes: list[tuple[str, Pose, BodyDims]] = []
    ego = config.ego
    if ego.start_lane_id in lane_map.lanes:
        lane = lane_map.lanes[ego.start_lane_id]
        if 0.0 <= ego.start_station <= lane.length:
            boxes.append(("ego", lane.path.pose_at(ego.start_station), ego.body))
    for npc in config.npc_vehicles:
        if npc.waypoints:
            boxes.append((npc.actor_id, npc.waypoints[0], npc.body))
    for obs in config.obstacles:
        boxes.append((obs.actor_id, obs.pose, obs.body))

    out = []
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            id_a, pose_a, body_a = boxes[i]
            id_b, pose_b, body_b = boxes[j]
            d = obb_distance(pose_a.x, pose_a.y, pose_a.heading, body_a.length, body_a.width,
                             pose_b.x, pose_b.y, pose_b.heading, body_b.length, body_b.width)
            if d <= 0.0:
                out.append(Violation("InitialOverlap", f"{id_a}/{id_b}",
                                     "actors overlap at spawn"))
    return out


# ---------------------------------------------------------------------------
# JSON serialization


def _pose_doc(pose: Pose) -> dict:
    return {"x": pose.x, "y": pose.y, "heading": pose.heading}


def _body_doc(body: BodyDims) -> dict:
    return {"length": body.length, "width": body.width}


def to_document(config: ScenarioConfig) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "scenario_id": config.scenario_id,
        "map_name": config.map_name,
        "duration_limit": config.duration_limit,
        "ego": {
            "start_lane_id": config.ego.start_lane_id,
            "start_station": config.ego.start_station,
            "end_lane_id": config.ego.end_lane_id,
            "end_station": config.ego.end_station,
            "body": _body_doc(config.ego.body),
        },
        "npc_vehicles": [
            {
                "actor_id": n.actor_id,
                "kind": "vehicle",
                "waypoints": [_pose_doc(p) for p in n.waypoints],
                "target_speeds": list(n.target_speeds),
                "spawn_delay": n.spawn_delay,
                "body": _body_doc(n.body),
            }
            for n in config.npc_vehicles
        ],
        "obstacles": [
            {"actor_id": o.actor_id, "pose": _pose_doc(o.pose), "body": _body_doc(o.body)}
            for o in config.obstacles
        ],
    }


def to_json(config: ScenarioConfig) -> str:
    return canonical.dumps(to_document(config))


def scenario_hash(config: ScenarioConfig) -> str:
    return canonical.sha256(to_document(config))


class _Cursor:
    """Typed field access over a JSON document with JSON-pointer error paths."""

    def __init__(self, doc: Any, path: str = ""):
        self.doc = doc
        self.path = path

    def fail(self, message: str) -> ScenarioFormatError:
        return ScenarioFormatError(f"{self.path or '/'}: {message}")

    def require_keys(self, required: set[str], optional: set[str] = frozenset()) -> None:
        if not isinstance(self.doc, dict):
            raise self.fail("expected an object")
        missing = required - set(self.doc)
        if missing:
            raise self.fail(f"missing keys {sorted(missing)}")
        unknown = set(self.doc) - required - optional
        if unknown:
            raise self.fail(f"unknown keys {sorted(unknown)}")

    def child(self, key: str) -> "_Cursor":
        return _Cursor(self.doc[key], f"{self.path}/{key}")

    def items(self) -> list["_Cursor"]:
        if not isinstance(self.doc, list):
            raise self.fail("expected an array")
        return [_Cursor(v, f"{self.path}/{i}") for i, v in enumerate(self.doc)]

    def as_str(self) -> str:
        if not isinstance(self.doc, str) or not self.doc:
            raise self.fail("expected a non-empty string")
        return self.doc

    def as_number(self) -> float:
        if isinstance(self.doc, bool) or not isinstance(self.doc, (int, float)):
            raise self.fail("expected a number")
        value = float(self.doc)
        if not math.isfinite(value):
            raise self.fail("expected a finite number")
        return value


def _parse_pose(cur: _Cursor) -> Pose:
    cur.require_keys({"x", "y", "heading"})
    return Pose(cur.child("x").as_number(), cur.child("y").as_number(),
                cur.child("heading").as_number())


def _parse_body(cur: _Cursor) -> BodyDims:
    cur.require_keys({"length", "width"})
    return BodyDims(cur.child("length").as_number(), cur.child("width").as_number())


def from_document(doc: Any) -> ScenarioConfig:
    root = _Cursor(doc)
    root.require_keys({"schema_version", "scenario_id", "map_name", "duration_limit",
                       "ego", "npc_vehicles", "obstacles"})
    version = root.child("schema_version")
    if version.doc != SCHEMA_VERSION:
        raise version.fail(f"unsupported schema_version {version.doc!r}")

    ego_cur = root.child("ego")
    ego_cur.require_keys({"start_lane_id", "start_station", "end_lane_id",
                          "end_station", "body"})
    ego = EgoSpec(
        start_lane_id=ego_cur.child("start_lane_id").as_str(),
        start_station=ego_cur.child("start_station").as_number(),
        end_lane_id=ego_cur.child("end_lane_id").as_str(),
        end_station=ego_cur.child("end_station").as_number(),
        body=_parse_body(ego_cur.child("body")),
    )

    npcs = []
    for cur in root.child("npc_vehicles").items():
        cur.require_keys({"actor_id", "waypoints", "target_speeds", "spawn_delay", "body"},
                         optional={"kind"})
        if "kind" in cur.doc:
            kind = cur.child("kind").as_str()
            if kind not in KNOWN_ACTOR_KINDS:
                raise cur.child("kind").fail(
                    f"unsupported actor kind {kind!r}; known: {list(KNOWN_ACTOR_KINDS)}")
        npcs.append(NpcSpec(
            actor_id=cur.child("actor_id").as_str(),
            waypoints=tuple(_parse_pose(p) for p in cur.child("waypoints").items()),
            target_speeds=tuple(s.as_number() for s in cur.child("target_speeds").items()),
            spawn_delay=cur.child("spawn_delay").as_number(),
            body=_parse_body(cur.child("body")),
        ))

    obstacles = []
    for cur in root.child("obstacles").items():
        cur.require_keys({"actor_id", "pose", "body"})
        obstacles.append(ObstacleSpec(
            actor_id=cur.child("actor_id").as_str(),
            pose=_parse_pose(cur.child("pose")),
            body=_parse_body(cur.child("body")),
        ))

    return ScenarioConfig(
        scenario_id=root.child("scenario_id").as_str(),
        map_name=root.child("map_name").as_str(),
        ego=ego,
        npc_vehicles=tuple(npcs),
        obstacles=tuple(obstacles),
        duration_limit=root.child("duration_limit").as_number(),
    )


def from_json(text: str | bytes) -> ScenarioConfig:
    try:
        doc = canonical.loads(text)
    except ValueError as exc:
        raise ScenarioFormatError(f"invalid JSON: {exc}") from None
    return from_document(doc)


# ---------------------------------------------------------------------------
# parameter vectors


@dataclass(frozen=True)
class Gene:
    actor_id: str
    field: str  # "speed" | "offset" | "delay" | "presence"
    index: int
    low: float
    high: float


@dataclass(frozen=True)
class MutationSpace:
    """Which scenario fields the search may touch, and their bounds."""
    speeds: bool = True
    offsets: bool = True
    delays: bool = True
    presence: bool = True
    speed_low: float = 0.0
    speed_high: float = 20.0
    offset_limit: float = 2.0
    delay_low: float = 0.0
    delay_high: float = 10.0


@dataclass(frozen=True)
class ParameterVector:
    values: tuple[float, ...]
    genes: tuple[Gene, ...]

    def __post_init__(self) -> None:
        if len(self.values) != len(self.genes):
            raise ValueError("values/genes length mismatch")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def bounds(self) -> tuple[tuple[float, ...], tuple[float, ...]]:
        return (tuple(g.low for g in self.genes), tuple(g.high for g in self.genes))

    def with_values(self, values) -> "ParameterVector":
        return ParameterVector(tuple(float(v) for v in values), self.genes)


def _layout(template: ScenarioConfig, space: MutationSpace) -> tuple[Gene, ...]:
    genes: list[Gene] = []
    for npc in template.npc_vehicles:
        if space.speeds:
            for i in range(len(npc.target_speeds)):
                genes.append(Gene(npc.actor_id, "speed", i, space.speed_low, space.speed_high))
        if space.offsets:
            for i in range(len(npc.waypoints)):
                genes.append(Gene(npc.actor_id, "offset", i,
                                  -space.offset_limit, space.offset_limit))
        if space.delays:
            genes.append(Gene(npc.actor_id, "delay", 0, space.delay_low, space.delay_high))
        if space.presence:
            genes.append(Gene(npc.actor_id, "presence", 0, 0.0, 1.0))
    return tuple(genes)


def flatten(config: ScenarioConfig, space: MutationSpace,
            template: ScenarioConfig | None = None) -> ParameterVector:
    """Project a config onto the mutable subspace declared by ``space``.

    Offsets are measured relative to ``template`` waypoints (the config itself
    by default), positive to the left of each template waypoint's heading.
    """
    template = template or config
    genes = _layout(template, space)
    by_id = {n.actor_id: n for n in config.npc_vehicles}
    unknown = set(by_id) - {n.actor_id for n in template.npc_vehicles}
    if unknown:
        raise ValueError(f"config has NPCs not in template: {sorted(unknown)}")
    tmpl_by_id = {n.actor_id: n for n in template.npc_vehicles}

    values: list[float] = []
    for gene in genes:
        tmpl_npc = tmpl_by_id[gene.actor_id]
        npc = by_id.get(gene.actor_id)
        if gene.field == "presence":
            values.append(1.0 if npc is not None else 0.0)
            continue
        if npc is None:
            npc = tmpl_npc  # inactive slot: genes fall back to template values
        if gene.field == "speed":
            if len(npc.target_speeds) != len(tmpl_npc.target_speeds):
                raise ValueError(f"{gene.actor_id}: speed count differs from template")
            values.append(npc.target_speeds[gene.index])
        elif gene.field == "offset":
            if len(npc.waypoints) != len(tmpl_npc.waypoints):
                raise ValueError(f"{gene.actor_id}: waypoint count differs from template")
            ref = tmpl_npc.waypoints[gene.index]
            wp = npc.waypoints[gene.index]
            nx, ny = left_normal(ref.heading)
            values.append((wp.x - ref.x) * nx + (wp.y - ref.y) * ny)
        elif gene.field == "delay":
            values.append(npc.spawn_delay)
        else:  # pragma: no cover - layout only emits known fields
            raise AssertionError(gene.field)
    return ParameterVector(tuple(values), genes)


def unflatten(vector: ParameterVector, template: ScenarioConfig
              ) -> tuple[ScenarioConfig, list[str]]:
    """Instantiate a concrete scenario from ``vector`` over ``template``.

    Out-of-bounds genes are clamped and reported in the second return value
    (one ``"actor/field[index]"`` entry per repaired gene).
    """
    repairs: list[str] = []
    clamped: list[float] = []
    for gene, value in zip(vector.genes, vector.values):
        if value < gene.low or value > gene.high:
            repairs.append(f"{gene.actor_id}/{gene.field}[{gene.index}]")
            value = min(max(value, gene.low), gene.high)
        clamped.append(value)

    per_actor: dict[str, dict[str, dict[int, float]]] = {}
    for gene, value in zip(vector.genes, clamped):
        per_actor.setdefault(gene.actor_id, {}).setdefault(gene.field, {})[gene.index] = value

    npcs: list[NpcSpec] = []
    for npc in template.npc_vehicles:
        fields = per_actor.get(npc.actor_id, {})
        presence = fields.get("presence", {}).get(0, 1.0)
        if presence < 0.5:
            continue
        speeds = list(npc.target_speeds)
        for i, v in fields.get("speed", {}).items():
            speeds[i] = v
        waypoints = list(npc.waypoints)
        for i, off in fields.get("offset", {}).items():
            ref = npc.waypoints[i]
            nx, ny = left_normal(ref.heading)
            waypoints[i] = Pose(ref.x + off * nx, ref.y + off * ny, ref.heading)
        delay = fields.get("delay", {}).get(0, npc.spawn_delay)
        npcs.append(replace(npc, waypoints=tuple(waypoints),
                            target_speeds=tuple(speeds), spawn_delay=delay))
    return replace(template, npc_vehicles=tuple(npcs)), repairs
