"""Wall-time comparisons of embedded and remote models"""
import csv
import io
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from time import perf_counter
from typing import Optional, Sequence

import numpy as np

from embedsim.bench.client import RemoteRunner
from embedsim.engine.behavior import (
    BehaviorSpec,
    GapLaneChange,
    KraussFollow,
    LaneChange,
    LearnedFollow,
    LearnedLaneChange,
)
from embedsim.engine.flow import FlowConfig
from embedsim.engine.simulation import Engine
from embedsim.errors import InputValidationError, InvalidPathError, ScenarioMismatch
from embedsim.learned.mlp import EMBEDDED, ModelRunner
from embedsim.network.types import RoadNetwork

LOGGER = logging.getLogger("embedsim.bench")

REPORT_HEADER = (
    "scenario",
    "controller",
    "spawned",
    "steps",
    "seconds",
    "steps_per_second",
    "decisions",
    "us_per_decision",
)


class ControllerKind(Enum):
    EMBEDDED_RULE = "EmbeddedRule"
    EMBEDDED_LEARNED = "EmbeddedLearned"
    REMOTE_LEARNED = "RemoteLearned"

    @property
    def learned(self) -> bool:
        return self is not ControllerKind.EMBEDDED_RULE


@dataclass(frozen=True)
class WallTimeReport:
    scenario: str
    kind: ControllerKind
    spawned: int
    steps: int
    seconds: float
    decisions: int

    @property
    def steps_per_second(self) -> float:
        if self.seconds <= 0:
            return 0.0

        return self.steps / self.seconds

    @property
    def decision_latency_us(self) -> float:
        """Mean wall time per decision, in microseconds"""
        if not self.decisions:
            return 0.0

        return self.seconds * 1e6 / self.decisions

    def row(self) -> list[str]:
        return [
            self.scenario,
            self.kind.value,
            str(self.spawned),
            str(self.steps),
            f"{self.seconds:.6f}",
            f"{self.steps_per_second:.3f}",
            str(self.decisions),
            f"{self.decision_latency_us:.3f}",
        ]


def behavior_for(
    kind: ControllerKind, follow_model: Optional[Path], lane_model: Optional[Path]
) -> BehaviorSpec:
    """The behavior every vehicle uses under a controller kind

    Learned kinds need a followSpeed model. Without a laneChange model
    they keep the gap lane-change rule.
    """
    if not kind.learned:
        return BehaviorSpec(KraussFollow(), GapLaneChange())

    if follow_model is None:
        raise InputValidationError(f"{kind.value} needs a followSpeed model")

    lane_change: LaneChange = GapLaneChange()
    if lane_model is not None:
        lane_change = LearnedLaneChange(lane_model)

    return BehaviorSpec(LearnedFollow(follow_model), lane_change)


def run_benchmark(
    network: RoadNetwork,
    flow: FlowConfig,
    steps: int,
    kind: ControllerKind,
    repetitions: int = 3,
    *,
    scenario: str = "scenario",
    follow_model: Optional[Path] = None,
    lane_model: Optional[Path] = None,
    endpoint: tuple[str, int] = ("127.0.0.1", 7447),
    dt: float = 1.0,
    log: Optional[Path] = None,
) -> WallTimeReport:
    """Time a scenario under one controller kind

    Each repetition builds a fresh engine and only the step loop is
    timed. For RemoteLearned the model server must already be running.

    Args:
        network: The network
        flow: The vehicles
        steps: Steps per repetition
        kind: Which controller drives every vehicle
        repetitions: How many times to run. The median time is reported
        scenario: A name for the scenario in reports
        follow_model: The followSpeed model for learned kinds
        lane_model: The laneChange model for learned kinds
        endpoint: Where the model server listens
        dt: Step length
        log: If given, the first repetition's trajectory is written here

    Raises:
        ServerUnreachable: if RemoteLearned can't reach the server
    """
    if repetitions < 1:
        raise InputValidationError(f"repetitions must be at least 1: {repetitions}")

    behavior = behavior_for(kind, follow_model, lane_model)

    timings = []
    spawned = decisions = 0
    for repetition in range(repetitions):
        remote = None
        runner: ModelRunner = EMBEDDED
        if kind is ControllerKind.REMOTE_LEARNED:
            remote = RemoteRunner(*endpoint)
            runner = remote

        try:
            engine = Engine(network, flow, dt=dt, behavior=behavior, runner=runner)

            start = perf_counter()
            trajectory = engine.run(steps)
            elapsed = perf_counter() - start
        finally:
            if remote is not None:
                remote.close()

        if log is not None and repetition == 0:
            trajectory.write(log)

        LOGGER.debug(
            "%s %s repetition %d: %.6f s", scenario, kind.value, repetition, elapsed
        )
        timings.append(elapsed)
        spawned, decisions = engine.spawned, engine.decisions

    report = WallTimeReport(
        scenario, kind, spawned, steps, float(np.median(timings)), decisions
    )
    LOGGER.info(
        "%s %s: %.3f s median of %d, %.3f us per decision",
        scenario,
        kind.value,
        report.seconds,
        repetitions,
        report.decision_latency_us,
    )

    return report


def speedup_rows(reports: Sequence[WallTimeReport]) -> list[list[str]]:
    """Report rows with the ratio of each time to the fastest

    Raises:
        ScenarioMismatch: if the reports aren't all of the same scenario
    """
    if len(reports) < 2:
        raise InputValidationError("a comparison needs at least two reports")

    if len({(report.scenario, report.steps) for report in reports}) > 1:
        raise ScenarioMismatch("reports are from different scenarios")

    fastest = min(report.seconds for report in reports)

    rows = []
    for report in reports:
        ratio = report.seconds / fastest if fastest > 0 else 1.0
        rows.append([*report.row(), f"{ratio:.3f}"])

    return rows


def report_speedup(reports: Sequence[WallTimeReport]) -> str:
    """A CSV comparison table"""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow([*REPORT_HEADER, "ratio"])
    writer.writerows(speedup_rows(reports))

    return buffer.getvalue()


def write_reports(reports: Sequence[WallTimeReport], path: Path):
    """Write the comparison table, or the plain row of a lone report"""
    if len(reports) == 1:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerows([REPORT_HEADER, reports[0].row()])
        table = buffer.getvalue()
    else:
        table = report_speedup(reports)

    try:
        path.write_text(table)
    except OSError as exception:
        raise InvalidPathError(f"{path}: {exception}") from exception


__all__ = (
    "ControllerKind",
    "WallTimeReport",
    "behavior_for",
    "report_speedup",
    "run_benchmark",
    "speedup_rows",
    "write_reports",
)
