"""How closely one run recovers another

Distances come from the logs alone: while a vehicle stays on a road it
travels the change in position, and in a step where it changes road it
travels its logged speed times the step length.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Any, NamedTuple, Optional

import numpy as np
import tomli_w

from embedsim.engine.trajectory import Event, TrajectoryLog, TrajectoryRecord
from embedsim.errors import InvalidPathError, NoSharedVehicles
from embedsim.version import VERSION


class Summary(NamedTuple):
    mean: float
    std: float

    def __str__(self) -> str:
        return f"{self.mean:.6f} ± {self.std:.6f}"


def distance_travelled(records: list[TrajectoryRecord]) -> float:
    """Total route distance covered by one vehicle's records"""
    total = 0.0
    for previous, current in zip(records, records[1:]):
        if current.road_id == previous.road_id:
            total += current.position - previous.position
        else:
            total += current.speed * (current.time - previous.time)

    return total


def travel_time(records: list[TrajectoryRecord], end_time: float) -> float:
    """Spawn to finish, or to end_time for a vehicle that didn't finish"""
    finish = end_time
    for record in records:
        if record.event is Event.FINISH:
            finish = record.time
            break

    return finish - records[0].time


def _shared(first: TrajectoryLog, second: TrajectoryLog) -> tuple[dict, dict, list]:
    first_vehicles = first.by_vehicle()
    second_vehicles = second.by_vehicle()
    shared = sorted(set(first_vehicles) & set(second_vehicles))

    if not shared:
        raise NoSharedVehicles("the logs have no vehicles in common")

    return first_vehicles, second_vehicles, shared


def _summarize(values: list[float]) -> Summary:
    array = np.array(values, dtype=np.float64)
    return Summary(float(array.mean()), float(array.std()))


def _displacement_errors(
    first: TrajectoryLog, second: TrajectoryLog
) -> dict[str, float]:
    first_vehicles, second_vehicles, shared = _shared(first, second)

    return {
        vehicle: abs(
            distance_travelled(first_vehicles[vehicle])
            - distance_travelled(second_vehicles[vehicle])
        )
        for vehicle in shared
    }


def _travel_time_errors(
    first: TrajectoryLog, second: TrajectoryLog
) -> dict[str, float]:
    first_vehicles, second_vehicles, shared = _shared(first, second)
    first_end, second_end = first.end_time, second.end_time

    return {
        vehicle: abs(
            travel_time(first_vehicles[vehicle], first_end)
            - travel_time(second_vehicles[vehicle], second_end)
        )
        for vehicle in shared
    }


def final_displacement_error(first: TrajectoryLog, second: TrajectoryLog) -> Summary:
    """Mean and population std of the per-vehicle distance difference

    Raises:
        NoSharedVehicles: if no vehicle appears in both logs
    """
    return _summarize(list(_displacement_errors(first, second).values()))


def travel_time_error(first: TrajectoryLog, second: TrajectoryLog) -> Summary:
    """Mean and population std of the per-vehicle travel time difference

    Unfinished vehicles are treated as finishing at the end of their log.

    Raises:
        NoSharedVehicles: if no vehicle appears in both logs
    """
    return _summarize(list(_travel_time_errors(first, second).values()))


@dataclass(frozen=True)
class TraceAgreement:
    """Step-by-step agreement of speeds and lanes

    Attributes:
        speed_rmse: RMS speed difference over (vehicle, step) pairs in both logs
        lane_agreement: fraction of those pairs with the same road and lane
        pairs: how many pairs were compared
    """

    speed_rmse: float
    lane_agreement: float
    pairs: int


def trace_agreement(first: TrajectoryLog, second: TrajectoryLog) -> TraceAgreement:
    others = {(record.vehicle_id, record.step): record for record in second}

    speed_differences = []
    same_lane = 0
    for record in first:
        other = others.get((record.vehicle_id, record.step))
        if other is None:
            continue

        speed_differences.append(record.speed - other.speed)
        if (record.road_id, record.lane_index) == (other.road_id, other.lane_index):
            same_lane += 1

    if not speed_differences:
        raise NoSharedVehicles("the logs share no vehicle at any step")

    differences = np.array(speed_differences, dtype=np.float64)

    return TraceAgreement(
        float(np.sqrt(np.mean(differences**2))),
        same_lane / len(speed_differences),
        len(speed_differences),
    )


@dataclass(frozen=True)
class VehicleError:
    vehicle_id: str
    displacement: float
    travel_time: float


@dataclass(frozen=True)
class RecoveryMetrics:
    displacement: Summary
    travel_time: Summary
    vehicles: list[VehicleError]
    trace: Optional[TraceAgreement] = None

    def serialize(self) -> dict[str, Any]:
        report: dict[str, Any] = {
            "version": VERSION.as_dict(),
            "summary": {
                "vehicles": len(self.vehicles),
                "mean_fde_m": self.displacement.mean,
                "std_fde_m": self.displacement.std,
                "mean_tte_s": self.travel_time.mean,
                "std_tte_s": self.travel_time.std,
            },
        }

        if self.trace is not None:
            report["trace"] = {
                "speed_rmse_mps": self.trace.speed_rmse,
                "lane_agreement": self.trace.lane_agreement,
                "pairs": self.trace.pairs,
            }

        report["vehicles"] = [
            {
                "id": vehicle.vehicle_id,
                "fde_m": vehicle.displacement,
                "tte_s": vehicle.travel_time,
            }
            for vehicle in self.vehicles
        ]

        return report


def recovery_metrics(first: TrajectoryLog, second: TrajectoryLog) -> RecoveryMetrics:
    """Every comparison between two runs of the same flow"""
    displacements = _displacement_errors(first, second)
    travel_times = _travel_time_errors(first, second)

    return RecoveryMetrics(
        _summarize(list(displacements.values())),
        _summarize(list(travel_times.values())),
        [
            VehicleError(vehicle, displacements[vehicle], travel_times[vehicle])
            for vehicle in displacements
        ],
        trace_agreement(first, second),
    )


def write_report(metrics: RecoveryMetrics, path: Path):
    try:
        with path.open("wb") as stream:
            tomli_w.dump(metrics.serialize(), stream)
    except OSError as exception:
        raise InvalidPathError(f"{path}: {exception}") from exception


__all__ = (
    "RecoveryMetrics",
    "Summary",
    "TraceAgreement",
    "VehicleError",
    "distance_travelled",
    "final_displacement_error",
    "recovery_metrics",
    "trace_agreement",
    "travel_time",
    "travel_time_error",
    "write_report",
)
