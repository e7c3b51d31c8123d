"""Lane-graph maps: loading, routing, projection, and route sampling.

A map document is JSON::

    {"name": "...", "lanes": [{"id": "...", "width": 3.5,
                               "centerline": [[x, y], ...],
                               "successors": ["..."], "predecessors": ["..."]}]}

Lanes are directed: traffic flows from the first centerline point to the
last.  Successor links express which lanes can be entered when the current
one ends; geometry is not required to be contiguous, although the bundled
maps are.
"""

from __future__ import annotations

import heapq
import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

from .geometry import Polyline, Pose

log = logging.getLogger(__name__)

# names accepted for bundled maps that are served by another bundled file
BUNDLED_ALIASES = {"borregas_ave": "borregas_ave_lite"}


class MapFormatError(ValueError):
    """Raised when a map document violates the schema or its invariants."""


@dataclass(frozen=True)
class Lane:
    lane_id: str
    width: float
    centerline: tuple[tuple[float, float], ...]
    successors: tuple[str, ...]
    predecessors: tuple[str, ...]
    path: Polyline = field(compare=False, repr=False, default=None)  # type: ignore[assignment]

    @property
    def length(self) -> float:
        return self.path.length


@dataclass(frozen=True)
class LaneMap:
    name: str
    lanes: dict[str, Lane]

    def lane(self, lane_id: str) -> Lane:
        try:
            return self.lanes[lane_id]
        except KeyError:
            raise MapFormatError(f"unknown lane id {lane_id!r} in map {self.name!r}") from None


@dataclass(frozen=True)
class Route:
    lane_sequence: tuple[str, ...]
    path: Polyline = field(compare=False, repr=False)
    total_length: float = 0.0


def _build_lane(entry: dict, index: int) -> Lane:
    where = f"lanes[{index}]"
    if not isinstance(entry, dict):
        raise MapFormatError(f"{where}: expected an object")
    unknown = set(entry) - {"id", "width", "centerline", "successors", "predecessors"}
    if unknown:
        raise MapFormatError(f"{where}: unknown keys {sorted(unknown)}")
    lane_id = entry.get("id")
    if not isinstance(lane_id, str) or not lane_id:
        raise MapFormatError(f"{where}: 'id' must be a non-empty string")
    width = entry.get("width")
    if not isinstance(width, (int, float)) or width <= 0:
        raise MapFormatError(f"{where}: 'width' must be > 0")
    raw_line = entry.get("centerline")
    if not isinstance(raw_line, list) or len(raw_line) < 2:
        raise MapFormatError(f"{where}: 'centerline' needs at least 2 points")
    points = []
    for j, pt in enumerate(raw_line):
        if (not isinstance(pt, list) or len(pt) != 2
                or not all(isinstance(c, (int, float)) for c in pt)):
            raise MapFormatError(f"{where}.centerline[{j}]: expected [x, y]")
        points.append((float(pt[0]), float(pt[1])))
    try:
        path = Polyline(points)
    except ValueError as exc:
        raise MapFormatError(f"{where}: {exc}") from None
    succ = entry.get("successors", [])
    pred = entry.get("predecessors", [])
    for key, val in (("successors", succ), ("predecessors", pred)):
        if not isinstance(val, list) or not all(isinstance(s, str) for s in val):
            raise MapFormatError(f"{where}: '{key}' must be a list of lane ids")
    return Lane(lane_id, float(width), tuple(points), tuple(succ), tuple(pred), path)


def load_map_document(doc: dict) -> LaneMap:
    if not isinstance(doc, dict):
        raise MapFormatError("map document must be an object")
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise MapFormatError("'name' must be a non-empty string")
    raw_lanes = doc.get("lanes")
    if not isinstance(raw_lanes, list) or not raw_lanes:
        raise MapFormatError("'lanes' must be a non-empty list")
    lanes: dict[str, Lane] = {}
    for i, entry in enumerate(raw_lanes):
        lane = _build_lane(entry, i)
        if lane.lane_id in lanes:
            raise MapFormatError(f"duplicate lane id {lane.lane_id!r}")
        lanes[lane.lane_id] = lane
    for lane in lanes.values():
        for ref in (*lane.successors, *lane.predecessors):
            if ref not in lanes:
                raise MapFormatError(
                    f"lane {lane.lane_id!r} references missing lane {ref!r}")
    return LaneMap(name, lanes)


def load_map(path: str | Path) -> LaneMap:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise MapFormatError(f"{path}: invalid JSON: {exc}") from None
    return load_map_document(doc)


def bundled_map_names() -> list[str]:
    files = resources.files("scenofuzz.maps")
    names = sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))
    return names


def load_bundled_map(name: str) -> LaneMap:
    """Load one of the maps shipped with the package by registry name."""
    actual = BUNDLED_ALIASES.get(name, name)
    if actual != name:
        log.info("map name %r served by bundled map %r", name, actual)
    res = resources.files("scenofuzz.maps").joinpath(f"{actual}.json")
    if not res.is_file():
        raise MapFormatError(
            f"no bundled map named {name!r}; available: {bundled_map_names()}")
    return load_map_document(json.loads(res.read_text()))


def _stitch(lanes: Iterable[Lane]) -> Polyline:
    points: list[tuple[float, float]] = []
    for lane in lanes:
        for pt in lane.centerline:
            if points:
                last = points[-1]
                if abs(pt[0] - last[0]) < 1e-3 and abs(pt[1] - last[1]) < 1e-3:
                    continue
            points.append(pt)
    return Polyline(points)


def route(lane_map: LaneMap, start_lane_id: str, end_lane_id: str) -> Route:
    """Shortest route by total lane arc length over the successor graph.

    Ties are broken toward the lexicographically smallest lane-id sequence,
    which makes the result independent of dict ordering and platform.
    """
    start = lane_map.lane(start_lane_id)
    lane_map.lane(end_lane_id)
    # heap of (cost, lane_sequence); a lane is settled at its first pop
    heap: list[tuple[float, tuple[str, ...]]] = [(start.length, (start_lane_id,))]
    settled: set[str] = set()
    while heap:
        cost, seq = heapq.heappop(heap)
        current = seq[-1]
        if current in settled:
            continue
        settled.add(current)
        if current == end_lane_id:
            path = _stitch(lane_map.lanes[lid] for lid in seq)
            return Route(seq, path, path.length)
        for nxt in sorted(lane_map.lanes[current].successors):
            if nxt not in settled:
                heapq.heappush(heap, (cost + lane_map.lanes[nxt].length, seq + (nxt,)))
    raise ValueError(
        f"no route from {start_lane_id!r} to {end_lane_id!r} in map {lane_map.name!r}")


def project(lane_map: LaneMap, x: float, y: float) -> tuple[str, float, float]:
    """Nearest-lane projection of a world point.

    Returns ``(lane_id, s, lateral)`` with ``s`` the arc length along the
    lane's centerline and ``lateral`` the signed offset, positive to the left
    of the travel direction.  Distance ties go to the lexicographically
    smallest lane id.
    """
    best: tuple[float, str, float, float] | None = None
    for lane_id in sorted(lane_map.lanes):
        s, lat, dist = lane_map.lanes[lane_id].path.project(x, y)
        if best is None or dist < best[0] - 1e-12:
            best = (dist, lane_id, s, lat)
    assert best is not None
    return best[1], best[2], best[3]


def sample_route(rt: Route, spacing: float) -> list[Pose]:
    """Poses along the route at ``spacing`` intervals plus the route end."""
    if spacing <= 0:
        raise ValueError("spacing must be > 0")
    poses = []
    s = 0.0
    while s < rt.total_length - 1e-9:
        poses.append(rt.path.pose_at(s))
        s += spacing
    poses.append(rt.path.pose_at(rt.total_length))
    return poses
