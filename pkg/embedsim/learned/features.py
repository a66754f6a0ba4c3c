"""Feature catalogs and masking

Each task has one canonical, ordered feature superset. Models trained
on a subset of it see the other features zeroed ("masked") so every
model of a task accepts the same input vector.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

import numpy as np

from embedsim.errors import DimensionMismatch, UnknownFeatureName
from embedsim.rulebased import NO_GAP, LaneContext
from embedsim.vehicle import LeaderInfo, Vehicle


class Task(Enum):
    FOLLOW_SPEED = "followSpeed"
    LANE_CHANGE = "laneChange"

    @property
    def tag(self) -> int:
        """The task's number in model files"""
        return 0 if self is Task.FOLLOW_SPEED else 1

    @classmethod
    def from_tag(cls, tag: int) -> "Task":
        return {0: cls.FOLLOW_SPEED, 1: cls.LANE_CHANGE}[tag]

    @property
    def outputs(self) -> int:
        return 1 if self is Task.FOLLOW_SPEED else 3


FOLLOW_SPEED_FEATURES = (
    "leaderSpeed",
    "egoSpeed",
    "gap",
    "egoMaxSpeed",
    "laneMaxSpeed",
    "usualAccel",
    "maxDecel",
    "distanceToLaneEnd",
    "dt",
    "hasLeader",
)

LANE_CHANGE_FEATURES = (
    "currentTime",
    "egoSpeed",
    "laneIndex",
    "laneCount",
    "gapAheadCurrent",
    "gapAheadLeft",
    "gapAheadRight",
    "gapBehindLeft",
    "gapBehindRight",
    "leftExists",
    "rightExists",
    "distanceToLaneEnd",
)

CATALOGS = {
    Task.FOLLOW_SPEED: FOLLOW_SPEED_FEATURES,
    Task.LANE_CHANGE: LANE_CHANGE_FEATURES,
}


def catalog(task: Task) -> tuple[str, ...]:
    return CATALOGS[task]


@dataclass(frozen=True)
class FeatureMask:
    """The features of a task's catalog a model actually uses"""

    task: Task
    included: frozenset[str]
    flags: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = catalog(self.task)
        unknown = sorted(set(self.included) - set(names))
        if unknown:
            raise UnknownFeatureName(
                f"not {self.task.value} features: {', '.join(unknown)}"
            )

        flags = np.array([name in self.included for name in names], dtype=bool)
        flags.setflags(write=False)
        object.__setattr__(self, "flags", flags)

    @classmethod
    def full(cls, task: Task) -> "FeatureMask":
        return cls(task, frozenset(catalog(task)))

    @classmethod
    def excluding(cls, task: Task, names: Iterable[str]) -> "FeatureMask":
        """Every feature but the named ones"""
        excluded = frozenset(names)
        unknown = sorted(excluded - set(catalog(task)))
        if unknown:
            raise UnknownFeatureName(
                f"not {task.value} features: {', '.join(unknown)}"
            )

        return cls(task, frozenset(catalog(task)) - excluded)

    def names(self) -> list[str]:
        """Included features in catalog order"""
        return [name for name in catalog(self.task) if name in self.included]


@dataclass(frozen=True)
class Surroundings:
    """What the engine knows about a vehicle's neighborhood at decision time

    Attributes:
        lane_max_speed: The speed limit of the vehicle's lane
        distance_to_lane_end: How far the front bumper is from the end of
            the road
        lane_count: Lanes on the vehicle's road
        leader: What the vehicle follows (possibly a red signal)
        lanes: Gaps in the current and adjacent lanes
    """

    lane_max_speed: float
    distance_to_lane_end: float
    lane_count: int = 1
    leader: Optional[LeaderInfo] = None
    lanes: LaneContext = LaneContext()


def extract_features(
    task: Task, vehicle: Vehicle, surroundings: Surroundings, clock: float, dt: float
) -> np.ndarray:
    """Build an unnormalized feature vector in catalog order

    Missing neighbors are reported with a gap of 1e4 m, speed 0, and an
    exists flag of 0.
    """
    params = vehicle.params

    if task is Task.FOLLOW_SPEED:
        leader = surroundings.leader
        return np.array(
            [
                leader.leader_speed if leader else 0.0,
                vehicle.speed,
                leader.gap if leader else NO_GAP,
                params.max_speed,
                surroundings.lane_max_speed,
                params.accel,
                params.decel,
                surroundings.distance_to_lane_end,
                dt,
                1.0 if leader else 0.0,
            ],
            dtype=np.float64,
        )

    lanes = surroundings.lanes
    left, right = lanes.left, lanes.right
    return np.array(
        [
            clock,
            vehicle.speed,
            float(vehicle.lane_index),
            float(surroundings.lane_count),
            lanes.gap_ahead,
            left.gap_ahead if left else NO_GAP,
            right.gap_ahead if right else NO_GAP,
            left.gap_behind if left else NO_GAP,
            right.gap_behind if right else NO_GAP,
            1.0 if left else 0.0,
            1.0 if right else 0.0,
            surroundings.distance_to_lane_end,
        ],
        dtype=np.float64,
    )


def apply_mask(mask: FeatureMask, features: np.ndarray) -> np.ndarray:
    """Zero every feature the mask doesn't include

    Works on a single vector or on a batch of row vectors.
    """
    features = np.asarray(features, dtype=np.float64)

    if features.shape[-1] != len(mask.flags):
        raise DimensionMismatch(
            f"{mask.task.value} expects {len(mask.flags)} features, "
            f"got {features.shape[-1]}"
        )

    return np.where(mask.flags, features, 0.0)


__all__ = (
    "CATALOGS",
    "FOLLOW_SPEED_FEATURES",
    "FeatureMask",
    "LANE_CHANGE_FEATURES",
    "Surroundings",
    "Task",
    "apply_mask",
    "catalog",
    "extract_features",
)
