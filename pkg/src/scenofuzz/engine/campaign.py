"""Campaign orchestration: budgets, batched evaluation, checkpointing, resume.

A campaign is one algorithm spending one budget against one scenario
template.  The context object owns everything stateful: the seeded random
generator, the evaluation log, the worker pool, and the checkpoint files.
Algorithms see a narrow surface (``rng``, ``prototype``, ``workers``,
``evaluate_batch``) so they can also be exercised against synthetic
landscapes in tests.

Determinism contract: scenario configurations are drawn from the seeded
generator serially, batches are joined in submission order, and the
evaluation log is written in canonical form, so two runs with the same seed
and budget produce byte-identical ``evaluations.json`` regardless of worker
count.  Resume replays the persisted log prefix instead of re-simulating,
then continues fresh; an interrupted-and-resumed campaign therefore ends
with the same log as an uninterrupted one.
"""

from __future__ import annotations

import dataclasses
import os
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import canonical
from ..bridge import (EgoAgentConfig, InProcessSession, ReferenceEgoAgent,
                      connect)
from ..lanemap import LaneMap
from ..runner import (OracleConfig, mission_path, run_scenario,
                      write_recording)
from ..scenario import (MutationSpace, ParameterVector, ScenarioConfig,
                        flatten, unflatten)
from ..simulator import VehicleParams
from .feedback import Feedback, compute_feedback

EVALUATIONS_FILE = "evaluations.json"
STATE_FILE = "campaign.state.json"
REPORT_FILE = "report.json"
RECORDINGS_DIR = "recordings"


class BudgetExhausted(Exception):
    """Raised by the context when no further evaluations are allowed."""


class CampaignError(RuntimeError):
    pass


@dataclass(frozen=True)
class CampaignBudget:
    max_evaluations: int | None = None
    wall_seconds: float | None = None

    def __post_init__(self) -> None:
        if self.max_evaluations is None and self.wall_seconds is None:
            raise ValueError("budget needs max_evaluations or wall_seconds")


@dataclass(frozen=True)
class AgentSettings:
    cruise_speed: float = 8.0
    fault_ignore_obstacles: bool = False
    fault_ignore_junction_traffic: bool = False


@dataclass(frozen=True)
class ExecutionSettings:
    lane_map: LaneMap
    template: ScenarioConfig
    space: MutationSpace = field(default_factory=MutationSpace)
    oracles: OracleConfig = field(default_factory=OracleConfig)
    agent: AgentSettings = field(default_factory=AgentSettings)
    params: VehicleParams = field(default_factory=VehicleParams)
    dt: float = 0.1
    endpoint: str | None = None  # None runs the reference agent in-process
    save_traffic_recording: bool = True


class CampaignContext:
    def __init__(self, settings: ExecutionSettings, budget: CampaignBudget,
                 seed: int = 0, workers: int = 1,
                 output_dir: str | Path | None = None,
                 resume: bool = False):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.settings = settings
        self.budget = budget
        self.seed = seed
        self.workers = workers
        self.output_dir = Path(output_dir) if output_dir is not None else None
        self.rng = np.random.default_rng(seed)
        self.prototype: ParameterVector = flatten(settings.template,
                                                  settings.space)
        self.records: list[dict] = []
        self.algorithm_name = ""
        self.finished = False
        self.stop_requested = False
        self._mission = mission_path(settings.template, settings.lane_map)
        self._lane_width = settings.lane_map.lane(
            settings.template.ego.start_lane_id).width
        self._replay: deque[dict] = deque()
        self._wall_prior = 0.0
        self._t0 = time.monotonic()
        if resume and self.output_dir is not None:
            self._load_checkpoint()

    # -- bookkeeping --------------------------------------------------------

    @property
    def completed(self) -> int:
        return len(self.records)

    def wall_consumed(self) -> float:
        return self._wall_prior + (time.monotonic() - self._t0)

    def _allowance(self, requested: int) -> int:
        if self.stop_requested:
            return 0
        allowed = requested
        if self.budget.max_evaluations is not None:
            allowed = min(allowed,
                          max(self.budget.max_evaluations - self.completed, 0))
        if self.budget.wall_seconds is not None \
                and self.wall_consumed() >= self.budget.wall_seconds:
            allowed = 0
        return allowed

    def _load_checkpoint(self) -> None:
        log_path = self.output_dir / EVALUATIONS_FILE
        if not log_path.exists():
            return
        try:
            entries = canonical.loads(log_path.read_text())
        except ValueError as exc:
            raise CampaignError(f"{log_path}: unreadable checkpoint: {exc}") \
                from None
        if not isinstance(entries, list):
            raise CampaignError(f"{log_path}: expected a JSON array")
        self._replay = deque(entries)
        state_path = self.output_dir / STATE_FILE
        if state_path.exists():
            state = canonical.loads(state_path.read_text())
            self._wall_prior = float(state.get("wall_consumed", 0.0))

    def checkpoint(self) -> None:
        if self.output_dir is None:
            return
        self.output_dir.mkdir(parents=True, exist_ok=True)
        _atomic_write(self.output_dir / EVALUATIONS_FILE,
                      canonical.dumps(self.records))
        state = {"algorithm": self.algorithm_name, "seed": self.seed,
                 "completed": self.completed, "finished": self.finished,
                 "wall_consumed": self.wall_consumed()}
        _atomic_write(self.output_dir / STATE_FILE, canonical.dumps(state))

    # -- evaluation ---------------------------------------------------------

    def evaluate_batch(self, vectors) -> list[Feedback]:
        """Evaluate vectors in order; log, checkpoint, and enforce budget.

        Raises :exc:`BudgetExhausted` when the batch does not fit (whatever
        did fit has been evaluated and logged first).
        """
        vectors = list(vectors)
        allowed = self._allowance(len(vectors))
        todo = vectors[:allowed]
        feedbacks: list[Feedback] = []

        replay_n = 0
        while self._replay and replay_n < len(todo):
            entry = self._replay[0]
            expected = [float(v) for v in todo[replay_n].values]
            if entry.get("values") != expected:
                raise CampaignError(
                    "resume mismatch at evaluation "
                    f"{self.completed}: the checkpoint was produced by a "
                    "different configuration or seed")
            self._replay.popleft()
            self.records.append(entry)
            feedbacks.append(_feedback_from_record(entry))
            replay_n += 1

        fresh = todo[replay_n:]
        if fresh:
            start = self.completed
            jobs = [(start + i, vec) for i, vec in enumerate(fresh)]
            if self.workers > 1 and len(jobs) > 1:
                with ThreadPoolExecutor(max_workers=self.workers) as pool:
                    results = list(pool.map(
                        lambda job: self._evaluate_one(*job), jobs))
            else:
                results = [self._evaluate_one(*job) for job in jobs]
            for record, feedback in results:
                self.records.append(record)
                feedbacks.append(feedback)

        self.checkpoint()
        if allowed < len(vectors):
            raise BudgetExhausted(
                f"{self.completed} evaluations done, budget exhausted")
        return feedbacks

    def _session_factory(self):
        settings = self.settings
        if settings.endpoint is not None:
            return connect(settings.endpoint)
        agent = settings.agent
        mission = self._mission

        def make_agent():
            return ReferenceEgoAgent(EgoAgentConfig(
                route=mission,
                cruise_speed=agent.cruise_speed,
                fault_ignore_obstacles=agent.fault_ignore_obstacles,
                fault_ignore_junction_traffic=agent.fault_ignore_junction_traffic,
                params=settings.params))

        return InProcessSession(make_agent)

    def _evaluate_one(self, index: int, vector: ParameterVector):
        config, repairs = unflatten(vector, self.settings.template)
        config = dataclasses.replace(config, scenario_id=f"eval_{index:06d}")
        recording = run_scenario(config, self.settings.lane_map,
                                 self._session_factory,
                                 self.settings.oracles, seed=self.seed,
                                 params=self.settings.params,
                                 dt=self.settings.dt)
        feedback = compute_feedback(recording, self._mission,
                                    self._lane_width, self.settings.params)
        if self.output_dir is not None:
            write_recording(recording, self.output_dir / RECORDINGS_DIR,
                            include_frames=self.settings.save_traffic_recording)
        record = {
            "index": index,
            "scenario_id": config.scenario_id,
            "values": [float(v) for v in vector.values],
            "repairs": list(repairs),
            "outcome": feedback.outcome,
            "fitness": feedback.fitness,
            "quality_score": feedback.quality_score,
            "behavior": list(feedback.behavior_vector),
            "time_of_decision": feedback.time_of_decision,
        }
        return record, feedback


def _feedback_from_record(record: dict) -> Feedback:
    return Feedback(fitness=float(record["fitness"]),
                    behavior_vector=tuple(record["behavior"]),
                    quality_score=float(record["quality_score"]),
                    outcome=str(record["outcome"]),
                    time_of_decision=float(record["time_of_decision"]))


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# dispatch


def algorithm_registry() -> dict:
    from . import avfuzzer, behavexplor, drivefuzz, random_search, samota
    return {
        "random": random_search.run,
        "avfuzzer": avfuzzer.run,
        "behavexplor": behavexplor.run,
        "samota": samota.run,
        "drivefuzz": drivefuzz.run,
    }


def build_report(ctx: CampaignContext, algorithm: str) -> dict:
    violations = [r for r in ctx.records if r["outcome"] == "CollisionViolation"]
    fitnesses = [r["fitness"] for r in ctx.records]
    return {
        "algorithm": algorithm,
        "seed": ctx.seed,
        "evaluations": ctx.completed,
        "violations": len(violations),
        "first_violation_index": violations[0]["index"] if violations else None,
        "best_fitness": min(fitnesses) if fitnesses else None,
        "wall_clock": ctx.wall_consumed(),
    }


def run_campaign(algorithm: str, ctx: CampaignContext,
                 params: dict | None = None) -> dict:
    registry = algorithm_registry()
    if algorithm not in registry:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of "
                         f"{sorted(registry)}")
    ctx.algorithm_name = algorithm
    try:
        registry[algorithm](ctx, dict(params or {}))
    except BudgetExhausted:
        pass
    ctx.finished = True
    ctx.checkpoint()
    report = build_report(ctx, algorithm)
    if ctx.output_dir is not None:
        _atomic_write(ctx.output_dir / REPORT_FILE, canonical.dumps(report))
    return report
