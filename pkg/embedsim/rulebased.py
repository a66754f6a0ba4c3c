"""Rule-based behavior models

These are the classical models the learned policies are cloned from:
Krauss-style and IDM car following, and a gap-acceptance lane change.
All of them are pure functions of their inputs.
"""
import math
from dataclasses import dataclass
from typing import Optional

from embedsim.vehicle import LaneChoice, LeaderInfo, Vehicle

# stand-in for a missing neighbor when a gap is needed (meters)
NO_GAP = 1e4

# IDM divides by the gap, which can't be allowed to reach zero
IDM_MIN_GAP = 1e-3

DEFAULT_HYSTERESIS = 5.0
DEFAULT_REAR_HEADWAY = 1.0


@dataclass(frozen=True)
class IdmParams:
    """IDM parameters on top of the vehicle's own

    Attributes:
        desired_speed: v0, in m/s. Defaults to the vehicle's max speed
        delta: acceleration exponent
    """

    desired_speed: Optional[float] = None
    delta: float = 4.0


@dataclass(frozen=True)
class SideLane:
    """What a vehicle can see in an adjacent lane"""

    gap_ahead: float = NO_GAP
    gap_behind: float = NO_GAP
    lead_speed: float = 0.0
    follower_speed: float = 0.0


@dataclass(frozen=True)
class LaneContext:
    """Gaps around a vehicle. left/right are None where no lane exists"""

    gap_ahead: float = NO_GAP
    lead_speed: float = 0.0
    left: Optional[SideLane] = None
    right: Optional[SideLane] = None


def krauss_follow_speed(
    vehicle: Vehicle, leader: Optional[LeaderInfo], lane_max_speed: float, dt: float
) -> float:
    """The Krauss target speed

    The vehicle accelerates freely up to its own and the lane's limits
    unless the safe speed behind the leader is lower::

        v_safe = -b·dt + sqrt((b·dt)² + v_leader² + 2·b·gap)
    """
    params = vehicle.params
    speed = min(vehicle.speed + params.accel * dt, params.max_speed, lane_max_speed)

    if leader is not None:
        braking = params.decel * dt
        radicand = braking**2 + leader.leader_speed**2 + 2 * params.decel * leader.gap
        speed = min(speed, -braking + math.sqrt(max(radicand, 0.0)))

    return max(speed, 0.0)


def idm_follow_speed(
    vehicle: Vehicle,
    leader: Optional[LeaderInfo],
    lane_max_speed: float,
    dt: float,
    idm: IdmParams = IdmParams(),
) -> float:
    """The Intelligent Driver Model target speed

    accel = a·(1 - (v/v0)^delta - (s*/gap)²) with the desired gap
    s* = s0 + v·T + v·Δv / (2·sqrt(a·b)), integrated over dt. A leader pulling
    away can take s* below s0.
    """
    params = vehicle.params
    speed = vehicle.speed
    desired = idm.desired_speed if idm.desired_speed is not None else params.max_speed

    interaction = 0.0
    if leader is not None:
        gap = max(leader.gap, IDM_MIN_GAP)
        approach = speed - leader.leader_speed
        desired_gap = (
            params.min_gap
            + speed * params.headway
            + speed * approach / (2 * math.sqrt(params.accel * params.decel))
        )
        interaction = (desired_gap / gap) ** 2

    accel = params.accel * (1 - (speed / desired) ** idm.delta - interaction)

    return min(
        max(speed + accel * dt, 0.0), min(params.max_speed, lane_max_speed)
    )


def rule_lane_change(
    vehicle: Vehicle,
    context: LaneContext,
    *,
    hysteresis: float = DEFAULT_HYSTERESIS,
    rear_headway: float = DEFAULT_REAR_HEADWAY,
) -> LaneChoice:
    """Gap-acceptance lane change

    A side lane is acceptable when its gap ahead beats the current one
    by more than the hysteresis and the gap behind leaves the follower
    in that lane at least min_gap + follower speed · rear_headway. If
    both sides are acceptable the larger gap ahead wins and a tie stays.
    """

    def acceptable(side: Optional[SideLane]) -> bool:
        return (
            side is not None
            and side.gap_ahead > context.gap_ahead + hysteresis
            and side.gap_behind
            >= vehicle.params.min_gap + side.follower_speed * rear_headway
        )

    left = acceptable(context.left)
    right = acceptable(context.right)

    if left and right:
        # both exist if both are acceptable
        left_gap = context.left.gap_ahead  # type: ignore
        right_gap = context.right.gap_ahead  # type: ignore

        if left_gap > right_gap:
            return LaneChoice.LEFT
        elif right_gap > left_gap:
            return LaneChoice.RIGHT

        return LaneChoice.STAY
    elif left:
        return LaneChoice.LEFT
    elif right:
        return LaneChoice.RIGHT

    return LaneChoice.STAY


__all__ = (
    "DEFAULT_HYSTERESIS",
    "DEFAULT_REAR_HEADWAY",
    "IdmParams",
    "LaneContext",
    "NO_GAP",
    "SideLane",
    "idm_follow_speed",
    "krauss_follow_speed",
    "rule_lane_change",
)
