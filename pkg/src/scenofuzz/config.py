"""YAML campaign configuration: strict parsing and assembly helpers.

The file has four sections: ``system`` (run management), ``scenario`` (the
ego mission and mutation space), ``scenario_runner`` (execution backend and
agent), and ``testing_engine`` (algorithm and oracles).  Unknown keys are
rejected with the full path to the offending entry so typos fail loudly
instead of silently running defaults.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .engine.campaign import AgentSettings, CampaignBudget
from .runner import OracleConfig
from .scenario import MutationSpace

log = logging.getLogger(__name__)

BUILTIN_RUNNER = "ApolloSim"
AGENT_TYPES = ("reference", "external")

# Every optional key with its default, addressed by dotted path.  The
# reference table in docs/config.md is generated from the same values and a
# test keeps the two in sync.
CONFIG_DEFAULTS: dict[str, Any] = {
    "system.debug": False,
    "system.resume": False,
    "system.output_root": "./results",
    "scenario.start_station": 0.0,
    "scenario.end_station": 0.0,
    "scenario.duration_limit": 45.0,
    "scenario.mutation_space.speeds": True,
    "scenario.mutation_space.offsets": True,
    "scenario.mutation_space.delays": True,
    "scenario.mutation_space.presence": True,
    "scenario.mutation_space.speed_low": 0.0,
    "scenario.mutation_space.speed_high": 20.0,
    "scenario.mutation_space.offset_limit": 2.0,
    "scenario.mutation_space.delay_low": 0.0,
    "scenario.mutation_space.delay_high": 10.0,
    "scenario_runner.name": "ApolloSim",
    "scenario_runner.parameters.container_name": "",
    "scenario_runner.parameters.save_traffic_recording": True,
    "scenario_runner.parameters.worker_pool": 1,
    "scenario_runner.parameters.dt": 0.1,
    "scenario_runner.parameters.agent.type": "reference",
    "scenario_runner.parameters.agent.endpoint": None,
    "scenario_runner.parameters.agent.cruise_speed": 8.0,
    "scenario_runner.parameters.agent.fault_ignore_obstacles": False,
    "scenario_runner.parameters.agent.fault_ignore_junction_traffic": False,
    "testing_engine.algorithm.parameters.run_hour": 2.0,
    "testing_engine.algorithm.parameters.local_run_hour": 0.5,
    "testing_engine.algorithm.parameters.population_size": 4,
    "testing_engine.algorithm.parameters.pm": 0.6,
    "testing_engine.algorithm.parameters.pc": 0.6,
    "testing_engine.algorithm.parameters.archive_threshold": 0.2,
    "testing_engine.algorithm.parameters.surrogate_pool": 20,
    "testing_engine.algorithm.parameters.max_evaluations": None,
    "testing_engine.algorithm.parameters.batch_size": None,
    "testing_engine.oracle.collision.threshold": 0.01,
    "testing_engine.oracle.destination.tolerance": 3.0,
    "testing_engine.oracle.stuck.speed": 0.3,
    "testing_engine.oracle.stuck.duration": 30.0,
}

REQUIRED_KEYS = (
    "scenario.map_name",
    "scenario.start_lane_id",
    "scenario.end_lane_id",
    "testing_engine.algorithm.name",
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    map_name: str
    start_lane_id: str
    end_lane_id: str
    algorithm: str
    debug: bool = False
    resume: bool = False
    output_root: str = "./results"
    start_station: float = 0.0
    end_station: float = 0.0
    duration_limit: float = 45.0
    mutation_space: MutationSpace = field(default_factory=MutationSpace)
    runner_name: str = BUILTIN_RUNNER
    container_name: str = ""
    save_traffic_recording: bool = True
    worker_pool: int = 1
    dt: float = 0.1
    agent_type: str = "reference"
    agent_endpoint: str | None = None
    agent: AgentSettings = field(default_factory=AgentSettings)
    algorithm_params: dict = field(default_factory=dict)
    oracles: OracleConfig = field(default_factory=OracleConfig)


class _Node:
    """Cursor over the raw YAML tree that reports path-qualified errors."""

    def __init__(self, doc: Any, path: str = ""):
        self.doc = doc
        self.path = path

    def _where(self, key: str = "") -> str:
        if not self.path and not key:
            return "config"
        return ".".join(p for p in (self.path, key) if p)

    def mapping(self) -> dict:
        if self.doc is None:
            return {}
        if not isinstance(self.doc, dict):
            raise ConfigError(f"{self._where()}: expected a mapping, "
                              f"got {type(self.doc).__name__}")
        return self.doc

    def child(self, key: str) -> "_Node":
        return _Node(self.mapping().get(key), self._where(key))

    def reject_unknown(self, known) -> None:
        unknown = sorted(set(self.mapping()) - set(known))
        if unknown:
            raise ConfigError(f"{self._where(unknown[0])}: unknown key "
                              f"(known keys: {', '.join(sorted(known))})")

    def get(self, key: str, default: Any) -> Any:
        value = self.mapping().get(key, default)
        return self._check(key, value, default)

    def require(self, key: str, kind: type) -> Any:
        mapping = self.mapping()
        if key not in mapping:
            raise ConfigError(f"{self._where(key)}: required key is missing")
        value = mapping[key]
        if kind is str:
            if not isinstance(value, str) or not value:
                raise ConfigError(f"{self._where(key)}: expected a non-empty "
                                  "string")
        return value

    def _check(self, key: str, value: Any, default: Any) -> Any:
        if value is None and default is None:
            return None
        where = self._where(key)
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{where}: expected true or false")
            return value
        if isinstance(default, int) and not isinstance(default, bool):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{where}: expected an integer")
            return value
        if isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{where}: expected a number")
            return float(value)
        if isinstance(default, str) or default is None:
            if not isinstance(value, str):
                raise ConfigError(f"{where}: expected a string")
            return value
        raise ConfigError(f"{where}: unsupported value")  # pragma: no cover


def _default(path: str) -> Any:
    return CONFIG_DEFAULTS[path]


def parse_config(doc: Any) -> RunConfig:
    root = _Node(doc)
    root.reject_unknown({"system", "scenario", "scenario_runner",
                         "testing_engine"})

    system = root.child("system")
    system.reject_unknown({"debug", "resume", "output_root"})

    scenario = root.child("scenario")
    scenario.reject_unknown({"map_name", "start_lane_id", "end_lane_id",
                             "start_station", "end_station", "duration_limit",
                             "mutation_space"})
    space_node = scenario.child("mutation_space")
    space_fields = ("speeds", "offsets", "delays", "presence", "speed_low",
                    "speed_high", "offset_limit", "delay_low", "delay_high")
    space_node.reject_unknown(set(space_fields))
    space = MutationSpace(**{
        name: space_node.get(name,
                             _default(f"scenario.mutation_space.{name}"))
        for name in space_fields})

    runner = root.child("scenario_runner")
    runner.reject_unknown({"name", "parameters"})
    runner_name = runner.get("name", _default("scenario_runner.name"))
    if runner_name != BUILTIN_RUNNER:
        raise ConfigError(
            f"scenario_runner.name: unknown runner {runner_name!r}; only "
            f"{BUILTIN_RUNNER!r} is available")
    rparams = runner.child("parameters")
    rparams.reject_unknown({"container_name", "save_traffic_recording",
                            "worker_pool", "dt", "agent"})
    container = rparams.get(
        "container_name", _default("scenario_runner.parameters.container_name"))
    if container:
        log.warning("scenario_runner.parameters.container_name=%r is accepted "
                    "for compatibility and ignored: the built-in runner does "
                    "not manage containers", container)
    worker_pool = rparams.get(
        "worker_pool", _default("scenario_runner.parameters.worker_pool"))
    if worker_pool < 1:
        raise ConfigError("scenario_runner.parameters.worker_pool: must be "
                          ">= 1")
    dt = rparams.get("dt", _default("scenario_runner.parameters.dt"))
    if dt <= 0:
        raise ConfigError("scenario_runner.parameters.dt: must be > 0")

    agent_node = rparams.child("agent")
    agent_node.reject_unknown({"type", "endpoint", "cruise_speed",
                               "fault_ignore_obstacles",
                               "fault_ignore_junction_traffic"})
    agent_prefix = "scenario_runner.parameters.agent"
    agent_type = agent_node.get("type", _default(f"{agent_prefix}.type"))
    if agent_type not in AGENT_TYPES:
        raise ConfigError(f"{agent_prefix}.type: expected one of "
                          f"{', '.join(AGENT_TYPES)}")
    agent = AgentSettings(
        cruise_speed=agent_node.get("cruise_speed",
                                    _default(f"{agent_prefix}.cruise_speed")),
        fault_ignore_obstacles=agent_node.get(
            "fault_ignore_obstacles",
            _default(f"{agent_prefix}.fault_ignore_obstacles")),
        fault_ignore_junction_traffic=agent_node.get(
            "fault_ignore_junction_traffic",
            _default(f"{agent_prefix}.fault_ignore_junction_traffic")))

    engine = root.child("testing_engine")
    engine.reject_unknown({"algorithm", "oracle"})
    algorithm = engine.child("algorithm")
    algorithm.reject_unknown({"name", "parameters"})
    aparams = algorithm.child("parameters")
    param_prefix = "testing_engine.algorithm.parameters"
    known_params = {key.rsplit(".", 1)[1]: CONFIG_DEFAULTS[key]
                    for key in CONFIG_DEFAULTS
                    if key.startswith(param_prefix + ".")}
    aparams.reject_unknown(set(known_params))
    resolved_params = {}
    for name, default in known_params.items():
        if default is None:
            value = aparams.mapping().get(name)
            if value is not None:
                if isinstance(value, bool) or not isinstance(value, int):
                    raise ConfigError(f"{param_prefix}.{name}: expected an "
                                      "integer")
                resolved_params[name] = value
        else:
            resolved_params[name] = aparams.get(name, default)
    if resolved_params.get("max_evaluations", 1) < 1:
        raise ConfigError(f"{param_prefix}.max_evaluations: must be >= 1")

    oracle = engine.child("oracle")
    oracle.reject_unknown({"collision", "destination", "stuck"})
    collision = oracle.child("collision")
    collision.reject_unknown({"threshold"})
    destination = oracle.child("destination")
    destination.reject_unknown({"tolerance"})
    stuck = oracle.child("stuck")
    stuck.reject_unknown({"speed", "duration"})
    oracles = OracleConfig(
        collision_threshold=collision.get(
            "threshold", _default("testing_engine.oracle.collision.threshold")),
        destination_tolerance=destination.get(
            "tolerance", _default("testing_engine.oracle.destination.tolerance")),
        stuck_speed=stuck.get(
            "speed", _default("testing_engine.oracle.stuck.speed")),
        stuck_duration=stuck.get(
            "duration", _default("testing_engine.oracle.stuck.duration")))

    return RunConfig(
        map_name=scenario.require("map_name", str),
        start_lane_id=scenario.require("start_lane_id", str),
        end_lane_id=scenario.require("end_lane_id", str),
        algorithm=algorithm.require("name", str),
        debug=system.get("debug", _default("system.debug")),
        resume=system.get("resume", _default("system.resume")),
        output_root=system.get("output_root", _default("system.output_root")),
        start_station=scenario.get("start_station",
                                   _default("scenario.start_station")),
        end_station=scenario.get("end_station",
                                 _default("scenario.end_station")),
        duration_limit=scenario.get("duration_limit",
                                    _default("scenario.duration_limit")),
        mutation_space=space,
        runner_name=runner_name,
        container_name=container,
        save_traffic_recording=rparams.get(
            "save_traffic_recording",
            _default("scenario_runner.parameters.save_traffic_recording")),
        worker_pool=worker_pool,
        dt=dt,
        agent_type=agent_type,
        agent_endpoint=agent_node.get("endpoint",
                                      _default(f"{agent_prefix}.endpoint")),
        agent=agent,
        algorithm_params=resolved_params,
        oracles=oracles,
    )


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    return parse_config(doc)


def build_execution(config: RunConfig):
    """Resolve a parsed config into engine inputs.

    Returns ``(settings, budget, algorithm_params)``.  Imports stay local so
    the config module remains import-light for tooling.
    """
    from .bridge import resolve_endpoint
    from .engine.campaign import ExecutionSettings
    from .engine.template import MissionSpec, build_template
    from .lanemap import load_bundled_map

    lane_map = load_bundled_map(config.map_name)
    mission = MissionSpec(config.map_name, config.start_lane_id,
                          config.start_station, config.end_lane_id,
                          config.end_station, config.duration_limit)
    template, _ = build_template(lane_map, mission, config.mutation_space)

    endpoint = resolve_endpoint(
        config.agent_endpoint if config.agent_type == "external" else None)
    if config.agent_type == "external" and endpoint is None:
        raise ConfigError(
            "scenario_runner.parameters.agent.endpoint: an external agent "
            "needs an endpoint here or in SCENOFUZZ_BRIDGE_ADDR")

    settings = ExecutionSettings(
        lane_map=lane_map, template=template, space=config.mutation_space,
        oracles=config.oracles, agent=config.agent, dt=config.dt,
        endpoint=endpoint,
        save_traffic_recording=config.save_traffic_recording)

    params = dict(config.algorithm_params)
    max_evals = params.get("max_evaluations")
    if max_evals is not None:
        budget = CampaignBudget(max_evaluations=max_evals)
    else:
        budget = CampaignBudget(
            wall_seconds=float(params.get("run_hour", 2.0)) * 3600.0)
    return settings, budget, params
