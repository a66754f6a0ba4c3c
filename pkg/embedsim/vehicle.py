"""Vehicle state and the kinematics shared by every behavior model"""
from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any, Optional, Sequence

from embedsim.errors import InputValidationError, RouteBroken

if TYPE_CHECKING:
    from embedsim.network.types import Road, RoadNetwork

# positions within this distance of the end of a road count as the end
LANE_END_EPSILON = 1e-9


class LaneChoice(Enum):
    """The lane part of an action. Values match the laneChange model outputs"""

    LEFT = 0
    STAY = 1
    RIGHT = 2

    @property
    def offset(self) -> int:
        """How the lane index changes. Left is the inner lane (lower index)"""
        return self.value - 1


class Transition(Enum):
    STAYS = "stays"
    MOVED = "moved"
    FINISHED = "finished"


@dataclass(frozen=True)
class VehicleParams:
    """Static vehicle parameters

    Attributes:
        length: in m
        max_speed: in m/s
        accel: usual acceleration, in m/s²
        decel: maximum deceleration as a positive magnitude, in m/s²
        min_gap: standstill gap, in m
        headway: desired time headway, in s
    """

    length: float = 5.0
    max_speed: float = 16.67
    accel: float = 2.0
    decel: float = 4.5
    min_gap: float = 2.5
    headway: float = 1.5

    def __post_init__(self):
        for name in ("length", "max_speed", "accel", "decel", "min_gap", "headway"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InputValidationError(f"vehicle {name} must be positive: {value}")

    def serialize(self) -> dict[str, float]:
        return {
            "length": self.length,
            "max_speed": self.max_speed,
            "accel": self.accel,
            "decel": self.decel,
            "min_gap": self.min_gap,
            "headway": self.headway,
        }


@dataclass(frozen=True)
class LeaderInfo:
    """What a vehicle knows about whatever is in front of it

    gap is bumper-to-bumper and never negative; overlaps are reported
    by the engine as collisions.
    """

    gap: float
    leader_speed: float
    leader_max_decel: float


@dataclass(frozen=True)
class Action:
    """A decision: an absolute target speed and a lane choice"""

    target_speed: float
    lane_choice: LaneChoice = LaneChoice.STAY


@dataclass
class Vehicle:
    """A vehicle's dynamic state. Position is that of the front bumper"""

    id: str
    params: VehicleParams
    route: tuple[str, ...]
    behavior: Any = field(default=None, compare=False)
    route_index: int = 0
    lane_index: int = 0
    position: float = 0.0
    speed: float = 0.0
    spawn_time: float = 0.0
    finish_time: Optional[float] = None

    @property
    def road_id(self) -> str:
        return self.route[self.route_index]

    @property
    def next_road_id(self) -> Optional[str]:
        if self.route_index + 1 < len(self.route):
            return self.route[self.route_index + 1]

        return None

    @property
    def finished(self) -> bool:
        return self.finish_time is not None


def leader_of(vehicle: Vehicle, occupancy: Sequence[Vehicle]) -> Optional[LeaderInfo]:
    """Find the nearest vehicle strictly ahead in the same lane

    Args:
        vehicle: The ego vehicle
        occupancy: Every vehicle on the lane, sorted by position, descending

    Returns:
        The leader, or None if nothing is ahead
    """
    ahead = bisect_left(occupancy, -vehicle.position, key=lambda other: -other.position)

    if ahead == 0:
        return None

    leader = occupancy[ahead - 1]

    return LeaderInfo(
        max(leader.position - leader.params.length - vehicle.position, 0.0),
        leader.speed,
        leader.params.decel,
    )


def speed_limit(vehicle: Vehicle, lane_max_speed: float) -> float:
    return min(vehicle.params.max_speed, lane_max_speed)


def advance(
    vehicle: Vehicle, action: Action, dt: float, lane_max_speed: float
) -> Vehicle:
    """Move a vehicle one step at the speed it chose

    The speed is clamped to what the vehicle and the lane allow and
    the position is integrated with the new speed.
    """
    if not dt > 0:
        raise InputValidationError(f"dt must be positive: {dt}")

    vehicle.speed = min(
        max(action.target_speed, 0.0), speed_limit(vehicle, lane_max_speed)
    )
    vehicle.position = vehicle.position + vehicle.speed * dt

    return vehicle


def transition_at_lane_end(
    vehicle: Vehicle, network: RoadNetwork, time: float
) -> Transition:
    """Move a vehicle that has reached the end of its road onto the next one

    The distance past the end of the road carries over onto the next
    road and the lane index is kept (clamped to the lanes the next road
    has). A vehicle at the end of its last road finishes.

    Args:
        vehicle: The vehicle
        network: The network it is on
        time: The time to record if the vehicle finishes

    Raises:
        RouteBroken: The next road in the route can't be reached
    """
    road: Road = network.road(vehicle.road_id)

    if vehicle.position < road.length - LANE_END_EPSILON:
        return Transition.STAYS

    following = vehicle.next_road_id
    if following is None:
        vehicle.position = road.length
        vehicle.finish_time = time
        return Transition.FINISHED

    if network.movement_between(road.id, following) is None:
        raise RouteBroken(f"{vehicle.id}: {following} doesn't follow {road.id}")

    next_road = network.road(following)
    vehicle.position = max(vehicle.position - road.length, 0.0)
    vehicle.route_index += 1
    vehicle.lane_index = next_road.lane(vehicle.lane_index).index

    return Transition.MOVED


__all__ = (
    "Action",
    "LANE_END_EPSILON",
    "LaneChoice",
    "LeaderInfo",
    "Transition",
    "Vehicle",
    "VehicleParams",
    "advance",
    "leader_of",
    "speed_limit",
    "transition_at_lane_end",
)
