"""Types representing the static road network"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

from embedsim.errors import UnknownItemError, UnknownRoad


class Movement(Enum):
    """What a vehicle does at the end of a road"""

    THROUGH = "through"
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class Lane:
    """A lane of a road. Index 0 is the innermost lane"""

    index: int
    max_speed: float

    def serialize(self) -> dict[str, Any]:
        return {"max_speed": self.max_speed}


@dataclass(frozen=True)
class Road:
    """A directed road between two intersections.

    origin and destination are None where the road starts or ends at
    the boundary of the network.
    """

    id: str
    origin: Optional[str]
    destination: Optional[str]
    length: float
    lanes: tuple[Lane, ...]

    def lane(self, index: int) -> Lane:
        """The lane at index, clamped to the lanes this road has"""
        return self.lanes[min(max(index, 0), len(self.lanes) - 1)]

    def serialize(self) -> dict[str, Any]:
        road: dict[str, Any] = {"id": self.id}

        if self.origin is not None:
            road["from"] = self.origin

        if self.destination is not None:
            road["to"] = self.destination

        road["length"] = self.length
        road["lanes"] = [lane.serialize() for lane in self.lanes]

        return road


@dataclass(frozen=True)
class Phase:
    """One phase of a fixed-time signal"""

    green: frozenset[tuple[str, Movement]]
    duration: float

    def serialize(self) -> dict[str, Any]:
        return {
            "duration": self.duration,
            "green": [
                f"{road}:{movement.value}"
                for road, movement in sorted(
                    self.green, key=lambda item: (item[0], item[1].value)
                )
            ],
        }


@dataclass(frozen=True)
class SignalPlan:
    """A fixed-time signal cycling through its phases"""

    phases: tuple[Phase, ...]
    offset: float = 0.0

    @property
    def cycle_length(self) -> float:
        return sum(phase.duration for phase in self.phases)

    def phase_at(self, time: float) -> Phase:
        """The phase active at a simulation time"""
        remaining = (time - self.offset) % self.cycle_length

        for phase in self.phases:
            if remaining < phase.duration:
                return phase

            remaining -= phase.duration

        # only reachable through float rounding at the very end of a cycle
        return self.phases[-1]

    def is_green(self, road: str, movement: Movement, time: float) -> bool:
        return (road, movement) in self.phase_at(time).green

    def serialize(self) -> dict[str, Any]:
        return {
            "offset": self.offset,
            "phases": [phase.serialize() for phase in self.phases],
        }


@dataclass(frozen=True)
class Turn:
    """An entry in an intersection's turn relation"""

    incoming: str
    movement: Movement
    outgoing: str

    def serialize(self) -> dict[str, str]:
        return {
            "incoming": self.incoming,
            "movement": self.movement.value,
            "outgoing": self.outgoing,
        }


@dataclass(frozen=True)
class Intersection:
    """A node joining roads, optionally signalized"""

    id: str
    turns: tuple[Turn, ...] = ()
    signal: Optional[SignalPlan] = None
    grid_coord: Optional[tuple[int, int]] = None

    def serialize(self) -> dict[str, Any]:
        intersection: dict[str, Any] = {"id": self.id}

        if self.grid_coord is not None:
            intersection["row"], intersection["col"] = self.grid_coord

        if self.signal is not None:
            intersection["signal"] = self.signal.serialize()

        intersection["turns"] = [turn.serialize() for turn in self.turns]

        return intersection


@dataclass(frozen=True)
class RoadNetwork:
    """The static topology vehicles move on.

    A RoadNetwork is never modified after it is built, so it can be
    shared freely (including between threads).
    """

    intersections: tuple[Intersection, ...]
    roads: tuple[Road, ...]
    _roads: dict[str, Road] = field(init=False, repr=False, compare=False)
    _intersections: dict[str, Intersection] = field(
        init=False, repr=False, compare=False
    )
    _turns: dict[tuple[str, Movement], str] = field(
        init=False, repr=False, compare=False
    )

    def __post_init__(self):
        object.__setattr__(self, "_roads", {road.id: road for road in self.roads})
        object.__setattr__(
            self,
            "_intersections",
            {intersection.id: intersection for intersection in self.intersections},
        )
        object.__setattr__(
            self,
            "_turns",
            {
                (turn.incoming, turn.movement): turn.outgoing
                for intersection in self.intersections
                for turn in intersection.turns
            },
        )

    def road(self, id: str) -> Road:
        try:
            return self._roads[id]
        except KeyError:
            raise UnknownRoad(id)

    def has_road(self, id: str) -> bool:
        return id in self._roads

    def intersection(self, id: str) -> Intersection:
        try:
            return self._intersections[id]
        except KeyError:
            raise UnknownItemError(id)

    def successor(self, road: str, movement: Movement) -> Optional[str]:
        """The road reached by making a movement at the end of a road"""
        if self.road(road).destination is None:
            return None

        return self._turns.get((road, movement))

    def movement_between(self, road: str, following: str) -> Optional[Movement]:
        """The movement that takes a vehicle from one road onto another"""
        for movement in Movement:
            if self._turns.get((road, movement)) == following:
                return movement

        return None

    def signal_for(self, road: str) -> Optional[SignalPlan]:
        """The signal controlling the end of a road, if any"""
        destination = self.road(road).destination

        if destination is None:
            return None

        return self.intersection(destination).signal

    @property
    def entry_roads(self) -> list[Road]:
        return [road for road in self.roads if road.origin is None]

    @property
    def exit_roads(self) -> list[Road]:
        return [road for road in self.roads if road.destination is None]

    def serialize(self) -> dict[str, Any]:
        return {
            "intersections": [
                intersection.serialize() for intersection in self.intersections
            ],
            "roads": [road.serialize() for road in self.roads],
        }


__all__ = (
    "Intersection",
    "Lane",
    "Movement",
    "Phase",
    "Road",
    "RoadNetwork",
    "SignalPlan",
    "Turn",
)
