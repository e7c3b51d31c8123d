"""Perception/control bridge between the simulator and a driving agent.

Wire protocol (both directions): a 4-byte big-endian unsigned length prefix
followed by that many bytes of UTF-8 canonical JSON.  Bodies::

    {"type": "perception", "sim_time": t, "ego": {...}, "obstacles": [...]}
    {"type": "control", "sim_time": t, "throttle": f, "brake": f, "steering": f}

The session is lockstep: the runner sends one perception frame and blocks for
exactly one control frame.  The in-process transport pushes messages through
the same encode/decode pair as TCP, so the two transports produce identical
traces for a deterministic agent.
"""

from __future__ import annotations

import logging
import math
import os
import socket
import struct
import threading
from dataclasses import dataclass, field

from . import canonical
from .geometry import Polyline, normalize_angle
from .simulator import (ActorState, ControlCommand, SpeedController,
                        VehicleParams, pure_pursuit_steering)

log = logging.getLogger(__name__)

HEADER = struct.Struct(">I")
MAX_FRAME_BYTES = 16 * 1024 * 1024
DEFAULT_TIMEOUT_S = 5.0
ENDPOINT_ENV_VAR = "SCENOFUZZ_BRIDGE_ADDR"


class FrameError(ValueError):
    """Any malformed wire frame: bad length, bad UTF-8, bad JSON, bad schema."""


class AgentTimeoutError(TimeoutError):
    """The agent did not answer a perception frame within the timeout."""


@dataclass(frozen=True)
class PerceptionMessage:
    sim_time: float
    ego: ActorState
    obstacles: tuple[ActorState, ...]


@dataclass(frozen=True)
class ControlMessage:
    sim_time: float
    command: ControlCommand


# ---------------------------------------------------------------------------
# encoding


def _actor_doc(state: ActorState) -> dict:
    return {"actor_id": state.actor_id, "kind": state.kind,
            "x": state.x, "y": state.y, "heading": state.heading,
            "speed": state.speed, "acceleration": state.acceleration,
            "length": state.length, "width": state.width}


def _parse_actor(doc, where: str) -> ActorState:
    if not isinstance(doc, dict):
        raise FrameError(f"{where}: expected an object")
    keys = {"actor_id", "kind", "x", "y", "heading", "speed", "acceleration",
            "length", "width"}
    if set(doc) != keys:
        raise FrameError(f"{where}: wrong keys {sorted(doc)}")
    if not isinstance(doc["actor_id"], str) or not isinstance(doc["kind"], str):
        raise FrameError(f"{where}: actor_id and kind must be strings")
    numbers = {}
    for key in ("x", "y", "heading", "speed", "acceleration", "length", "width"):
        value = doc[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)) \
                or not math.isfinite(float(value)):
            raise FrameError(f"{where}/{key}: expected a finite number")
        numbers[key] = float(value)
    try:
        return ActorState(doc["actor_id"], doc["kind"], **numbers)
    except ValueError as exc:
        raise FrameError(f"{where}: {exc}") from None


def _require_number(doc: dict, key: str) -> float:
    value = doc.get(key)
    if isinstance(value, bool) or not isinstance(value, (int, float)) \
            or not math.isfinite(float(value)):
        raise FrameError(f"/{key}: expected a finite number")
    return float(value)


def encode(message: PerceptionMessage | ControlMessage) -> bytes:
    """Serialize a message to a complete length-prefixed wire frame."""
    if isinstance(message, PerceptionMessage):
        body = {"type": "perception", "sim_time": message.sim_time,
                "ego": _actor_doc(message.ego),
                "obstacles": [_actor_doc(o) for o in message.obstacles]}
    elif isinstance(message, ControlMessage):
        cmd = message.command
        body = {"type": "control", "sim_time": message.sim_time,
                "throttle": cmd.throttle, "brake": cmd.brake,
                "steering": cmd.steering}
    else:
        raise TypeError(f"cannot encode {type(message).__name__}")
    payload = canonical.dump_bytes(body)
    return HEADER.pack(len(payload)) + payload


def decode(frame: bytes) -> PerceptionMessage | ControlMessage:
    """Parse one complete frame. Raises FrameError for anything malformed."""
    if len(frame) < HEADER.size:
        raise FrameError("frame shorter than its length header")
    (declared,) = HEADER.unpack(frame[:HEADER.size])
    if declared > MAX_FRAME_BYTES:
        raise FrameError(f"declared length {declared} exceeds {MAX_FRAME_BYTES}")
    body = frame[HEADER.size:]
    if len(body) < declared:
        raise FrameError(f"truncated frame: declared {declared}, got {len(body)}")
    if len(body) > declared:
        raise FrameError(f"trailing bytes after declared length {declared}")
    try:
        doc = canonical.loads(body.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise FrameError(f"body is not UTF-8: {exc}") from None
    except ValueError as exc:
        raise FrameError(f"body is not JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise FrameError("body must be a JSON object")
    kind = doc.get("type")
    if kind == "perception":
        if set(doc) != {"type", "sim_time", "ego", "obstacles"}:
            raise FrameError(f"perception: wrong keys {sorted(doc)}")
        obstacles = doc["obstacles"]
        if not isinstance(obstacles, list):
            raise FrameError("/obstacles: expected an array")
        return PerceptionMessage(
            sim_time=_require_number(doc, "sim_time"),
            ego=_parse_actor(doc["ego"], "/ego"),
            obstacles=tuple(_parse_actor(o, f"/obstacles/{i}")
                            for i, o in enumerate(obstacles)))
    if kind == "control":
        if set(doc) != {"type", "sim_time", "throttle", "brake", "steering"}:
            raise FrameError(f"control: wrong keys {sorted(doc)}")
        return ControlMessage(
            sim_time=_require_number(doc, "sim_time"),
            command=ControlCommand(_require_number(doc, "throttle"),
                                   _require_number(doc, "brake"),
                                   _require_number(doc, "steering")))
    raise FrameError(f"unknown message type {kind!r}")


def read_frame(reader, timeout_guard=None) -> bytes:
    """Read one complete frame from a file-like object with .recv or .read."""
    header = _read_exact(reader, HEADER.size)
    (declared,) = HEADER.unpack(header)
    if declared > MAX_FRAME_BYTES:
        raise FrameError(f"declared length {declared} exceeds {MAX_FRAME_BYTES}")
    return header + _read_exact(reader, declared)


def _read_exact(sock, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining > 0:
        chunk = sock.recv(remaining)
        if not chunk:
            raise FrameError("connection closed mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


# ---------------------------------------------------------------------------
# reference ego agent


@dataclass
class EgoAgentConfig:
    route: Polyline
    cruise_speed: float = 8.0
    corridor_length: float = 25.0
    corridor_margin: float = 1.0      # added to ego width
    time_headway: float = 2.0         # s
    hard_stop_gap: float = 6.0        # m
    off_route_limit: float = 20.0     # m
    comfort_brake: float = 2.0        # m/s^2, approach-to-stop profile
    lat_accel_max: float = 2.5        # m/s^2, curve slowdown
    fault_ignore_obstacles: bool = False
    fault_ignore_junction_traffic: bool = False
    params: VehicleParams = field(default_factory=VehicleParams)


class ReferenceEgoAgent:
    """Waypoint-following ego driver used when no external stack is attached.

    Pure pursuit on the mission route plus cruise-speed tracking; brakes for
    obstacles in a forward corridor.  The two fault switches disable obstacle
    handling wholesale or only for crossing traffic, which turns this into a
    deterministic bug-injected stack for oracle and search testing.
    """

    def __init__(self, config: EgoAgentConfig):
        self.config = config
        self.speed_ctl = SpeedController(config.params)
        self.off_route = False

    def _corridor_gap(self, ego: ActorState, obstacles) -> float | None:
        cfg = self.config
        half_width = (ego.width + cfg.corridor_margin) / 2.0
        cos_h, sin_h = math.cos(ego.heading), math.sin(ego.heading)
        gap: float | None = None
        for obs in obstacles:
            if cfg.fault_ignore_junction_traffic and \
                    abs(normalize_angle(obs.heading - ego.heading)) > math.pi / 4:
                continue  # crossing traffic dropped by the injected fault
            dx, dy = obs.x - ego.x, obs.y - ego.y
            forward = dx * cos_h + dy * sin_h
            lateral = -dx * sin_h + dy * cos_h
            if forward <= 0.0 or forward > cfg.corridor_length:
                continue
            if abs(lateral) > half_width:
                continue
            this_gap = forward - (ego.length + obs.length) / 2.0
            if gap is None or this_gap < gap:
                gap = this_gap
        return gap

    def step(self, perception: PerceptionMessage) -> ControlMessage:
        cfg = self.config
        ego = perception.ego
        s, _, dist = cfg.route.project(ego.x, ego.y)

        if dist > cfg.off_route_limit:
            if not self.off_route:
                log.warning("ego %.1f m off route at t=%.1f, holding full brake",
                            dist, perception.sim_time)
            self.off_route = True
            return ControlMessage(perception.sim_time, ControlCommand(0.0, 1.0, 0.0))

        steering = pure_pursuit_steering(ego, cfg.route, s, cfg.params)

        remaining = max(cfg.route.length - s, 0.0)
        target = min(cfg.cruise_speed, math.sqrt(2.0 * cfg.comfort_brake * remaining))
        # slow down for curvature ahead of the front axle
        probe = 12.0
        if remaining > 1.0:
            dh = abs(normalize_angle(
                cfg.route.heading_at(min(s + probe, cfg.route.length))
                - cfg.route.heading_at(s)))
            curvature = dh / probe
            if curvature > 1e-4:
                target = min(target, math.sqrt(cfg.lat_accel_max / curvature))

        gap = None
        if not cfg.fault_ignore_obstacles:
            gap = self._corridor_gap(ego, perception.obstacles)
        if gap is not None:
            if gap < cfg.hard_stop_gap:
                return ControlMessage(perception.sim_time,
                                      ControlCommand(0.0, 1.0, steering))
            headway = gap / max(ego.speed, 0.1)
            if headway < cfg.time_headway:
                brake = min((cfg.time_headway - headway) / cfg.time_headway, 1.0)
                return ControlMessage(perception.sim_time,
                                      ControlCommand(0.0, brake, steering))

        throttle, brake = self.speed_ctl.pedals(ego.speed, target, 0.1)
        return ControlMessage(perception.sim_time,
                              ControlCommand(throttle, brake, steering))


# ---------------------------------------------------------------------------
# sessions


class BridgeSession:
    """Lockstep request/response channel to one agent instance."""

    def __init__(self) -> None:
        self.sent = 0
        self.received = 0

    def request(self, perception: PerceptionMessage) -> ControlMessage:
        raise NotImplementedError

    def close(self) -> None:  # pragma: no cover - overridden where needed
        pass

    @property
    def in_flight(self) -> int:
        return self.sent - self.received


class InProcessSession(BridgeSession):
    """Runs the agent in this process, still round-tripping the wire format."""

    def __init__(self, agent_factory):
        super().__init__()
        self.agent = agent_factory()

    def request(self, perception: PerceptionMessage) -> ControlMessage:
        self.sent += 1
        decoded = decode(encode(perception))
        reply = self.agent.step(decoded)
        control = decode(encode(reply))
        if not isinstance(control, ControlMessage):
            raise FrameError("agent answered with a non-control message")
        self.received += 1
        return control


class TcpSession(BridgeSession):
    def __init__(self, host: str, port: int, timeout: float = DEFAULT_TIMEOUT_S):
        super().__init__()
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.sock.settimeout(timeout)

    def request(self, perception: PerceptionMessage) -> ControlMessage:
        self.sent += 1
        self.sock.sendall(encode(perception))
        try:
            frame = read_frame(self.sock)
        except socket.timeout:
            raise AgentTimeoutError(
                f"no control reply within {self.sock.gettimeout()} s") from None
        control = decode(frame)
        if not isinstance(control, ControlMessage):
            raise FrameError("agent answered with a non-control message")
        self.received += 1
        return control

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:  # pragma: no cover
            pass


_INPROC_AGENTS: dict[str, object] = {}


def register_inproc_agent(name: str, factory) -> None:
    _INPROC_AGENTS[name] = factory


def resolve_endpoint(default: str | None = None) -> str | None:
    """Bridge endpoint, with the environment variable taking precedence."""
    return os.environ.get(ENDPOINT_ENV_VAR) or default


def connect(endpoint: str, timeout: float = DEFAULT_TIMEOUT_S) -> BridgeSession:
    """Open a session to ``inproc:<name>`` or ``host:port``."""
    if endpoint.startswith("inproc:"):
        name = endpoint[len("inproc:"):]
        if name not in _INPROC_AGENTS:
            raise ValueError(f"no in-process agent registered as {name!r}")
        return InProcessSession(_INPROC_AGENTS[name])
    host, sep, port = endpoint.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"endpoint must be 'inproc:<name>' or 'host:port', "
                         f"got {endpoint!r}")
    return TcpSession(host or "127.0.0.1", int(port), timeout)


class BridgeServer:
    """Threaded TCP server hosting one agent instance per connection."""

    def __init__(self, agent_factory, host: str = "127.0.0.1", port: int = 0):
        self.agent_factory = agent_factory
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.sock.bind((host, port))
        self.sock.listen()
        self.address = self.sock.getsockname()
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._thread.start()

    @property
    def endpoint(self) -> str:
        return f"{self.address[0]}:{self.address[1]}"

    def _accept_loop(self) -> None:
        try:
            self.sock.settimeout(0.2)
        except OSError:
            return
        while not self._stop.is_set():
            try:
                conn, _ = self.sock.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            threading.Thread(target=self._serve_connection, args=(conn,),
                             daemon=True).start()

    def _serve_connection(self, conn: socket.socket) -> None:
        agent = self.agent_factory()
        conn.settimeout(30.0)
        try:
            while not self._stop.is_set():
                try:
                    frame = read_frame(conn)
                except (FrameError, socket.timeout, OSError):
                    return
                try:
                    perception = decode(frame)
                    reply = agent.step(perception)
                    conn.sendall(encode(reply))
                except (FrameError, OSError) as exc:
                    log.warning("bridge connection dropped: %s", exc)
                    return
        finally:
            conn.close()

    def close(self) -> None:
        self._stop.set()
        try:
            self.sock.close()
        except OSError:  # pragma: no cover
            pass
        self._thread.join(timeout=2.0)


def serve(agent_factory, host: str = "127.0.0.1", port: int = 0) -> BridgeServer:
    return BridgeServer(agent_factory, host, port)
