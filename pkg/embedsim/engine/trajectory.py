"""Trajectory logs

Logs are written as CSV with every float at six decimals, so identical
runs give identical bytes.
"""
import csv
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Iterator, Optional

from embedsim.errors import InvalidPathError, LogSinkError, ParseError

HEADER = (
    "step",
    "time",
    "vehicle_id",
    "road_id",
    "lane_index",
    "position_m",
    "speed_mps",
    "event",
)


class Event(Enum):
    NONE = "none"
    SPAWN = "spawn"
    LANE_CHANGE_LEFT = "laneChangeLeft"
    LANE_CHANGE_RIGHT = "laneChangeRight"
    TRANSITION = "transition"
    FINISH = "finish"
    COLLISION = "collision"


# when several things happen to a vehicle in one step, the first is logged
PRECEDENCE = (
    Event.FINISH,
    Event.COLLISION,
    Event.TRANSITION,
    Event.LANE_CHANGE_LEFT,
    Event.LANE_CHANGE_RIGHT,
    Event.SPAWN,
)


def strongest(events: Iterable[Event]) -> Event:
    happened = set(events)
    for event in PRECEDENCE:
        if event in happened:
            return event

    return Event.NONE


@dataclass(frozen=True)
class TrajectoryRecord:
    step: int
    time: float
    vehicle_id: str
    road_id: str
    lane_index: int
    position: float
    speed: float
    event: Event = Event.NONE

    def row(self) -> list[str]:
        return [
            str(self.step),
            f"{self.time:.6f}",
            self.vehicle_id,
            self.road_id,
            str(self.lane_index),
            f"{self.position:.6f}",
            f"{self.speed:.6f}",
            self.event.value,
        ]


@dataclass
class TrajectoryLog:
    """Records ordered by step and then vehicle id"""

    records: list[TrajectoryRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[TrajectoryRecord]:
        return iter(self.records)

    def extend(self, records: Iterable[TrajectoryRecord]):
        self.records.extend(records)

    def by_vehicle(self) -> dict[str, list[TrajectoryRecord]]:
        vehicles: dict[str, list[TrajectoryRecord]] = defaultdict(list)
        for record in self.records:
            vehicles[record.vehicle_id].append(record)

        return dict(vehicles)

    @property
    def end_time(self) -> float:
        """The time of the last record, 0 for an empty log"""
        return max((record.time for record in self.records), default=0.0)

    def count(self, event: Event) -> int:
        return sum(1 for record in self.records if record.event is event)

    def write(self, path: Path):
        with TrajectoryWriter(path) as writer:
            writer.write(self.records)

    @classmethod
    def read(cls, path: Path) -> "TrajectoryLog":
        try:
            with path.open(newline="") as stream:
                rows = list(csv.reader(stream))
        except OSError as exception:
            raise InvalidPathError(f"{path}: {exception}") from exception

        if not rows or tuple(rows[0]) != HEADER:
            raise ParseError(f"{path}: not a trajectory log")

        records = []
        for line, row in enumerate(rows[1:], start=2):
            try:
                step, time, vehicle, road, lane, position, speed, event = row
                records.append(
                    TrajectoryRecord(
                        int(step),
                        float(time),
                        vehicle,
                        road,
                        int(lane),
                        float(position),
                        float(speed),
                        Event(event),
                    )
                )
            except ValueError:
                raise ParseError(f"{path}:{line}: malformed record")

        return cls(records)


class TrajectoryWriter:
    """Streams records to a CSV file as a simulation runs"""

    def __init__(self, path: Path):
        self.path = path
        self._stream: Optional[IO[str]] = None
        self._writer = None

    def __enter__(self) -> "TrajectoryWriter":
        try:
            self._stream = self.path.open("w", newline="")
            self._writer = csv.writer(self._stream, lineterminator="\n")
            self._writer.writerow(HEADER)
        except OSError as exception:
            raise LogSinkError(f"{self.path}: {exception}") from exception

        return self

    def write(self, records: Iterable[TrajectoryRecord]):
        try:
            self._writer.writerows(record.row() for record in records)  # type: ignore
        except OSError as exception:
            raise LogSinkError(f"{self.path}: {exception}") from exception

    def __exit__(self, *exc_info):
        if self._stream is not None:
            self._stream.close()
            self._stream = None


__all__ = (
    "Event",
    "HEADER",
    "TrajectoryLog",
    "TrajectoryRecord",
    "TrajectoryWriter",
    "strongest",
)
