"""The simulation loop

Every step runs the same phases in the same order. Lane choices read the
lanes as they were at the start of the step, and speeds are chosen after
the granted lane changes are applied:

1. signals are read at the current time
2. vehicles that change lanes choose a lane
3. lane changes are granted in vehicle id order and applied
4. every vehicle chooses a target speed (a red signal is a stopped
   leader just before the stop line)
5. every vehicle moves
6. vehicles at the end of a road move onto the next one or finish
7. due vehicles spawn where there is room, otherwise they wait
8. overlapping vehicles are logged as collisions and the clock advances
"""
import logging
from bisect import bisect_left
from collections import defaultdict
from dataclasses import replace
from typing import Callable, Optional, Sequence

import numpy as np

from embedsim.engine.behavior import BehaviorSpec, ModelTable
from embedsim.engine.flow import FlowConfig, SpawnRecord, validate_flow
from embedsim.engine.trajectory import (
    Event,
    TrajectoryLog,
    TrajectoryRecord,
    TrajectoryWriter,
    strongest,
)
from embedsim.errors import InputValidationError, LearnedTeacher
from embedsim.learned.features import Surroundings, Task, extract_features
from embedsim.learned.mlp import EMBEDDED, ModelRunner
from embedsim.learned.training import BcDataset
from embedsim.network.types import Road, RoadNetwork
from embedsim.rulebased import NO_GAP, LaneContext, SideLane
from embedsim.vehicle import (
    Action,
    LaneChoice,
    LeaderInfo,
    Transition,
    Vehicle,
    advance,
    leader_of,
    transition_at_lane_end,
)

LOGGER = logging.getLogger("embedsim.engine")

# vehicles stop this far before the end of a road on red
STOP_LINE_MARGIN = 1.0

DecisionHook = Callable[[Task, Vehicle, Surroundings, float], None]


def _position_key(vehicle: Vehicle) -> float:
    return -vehicle.position


def _slots_overlap(first: Vehicle, second: Vehicle) -> bool:
    """Whether two vehicles changing into the same lane would crowd each other"""
    return (
        first.position - first.params.length - first.params.min_gap
        < second.position + second.params.min_gap
        and second.position - second.params.length - second.params.min_gap
        < first.position + first.params.min_gap
    )


def _bodies_overlap(first: Vehicle, second: Vehicle) -> bool:
    return (
        first.position - first.params.length < second.position
        and second.position - second.params.length < first.position
    )


class Engine:
    """A running simulation

    Args:
        network: The road network
        flow: The vehicles to spawn
        dt: Step length in seconds
        collision_tolerance: How far vehicles may overlap before it is
            logged as a collision
        behavior: If given, every vehicle uses this instead of the
            behavior the flow assigns it
        runner: How learned models are evaluated
        spawn_jitter: If positive, each spawn is delayed by a uniform
            random amount up to this many seconds
        seed: Seeds the spawn jitter

    Raises:
        FlowValidationError: if the flow doesn't fit the network
        ModelLoadError: if a learned model can't be loaded
    """

    def __init__(
        self,
        network: RoadNetwork,
        flow: FlowConfig,
        *,
        dt: float = 1.0,
        collision_tolerance: float = 1e-6,
        behavior: Optional[BehaviorSpec] = None,
        runner: ModelRunner = EMBEDDED,
        spawn_jitter: float = 0.0,
        seed: int = 0,
    ):
        if not dt > 0:
            raise InputValidationError(f"dt must be positive: {dt}")

        if spawn_jitter < 0:
            raise InputValidationError(
                f"spawn jitter must be nonnegative: {spawn_jitter}"
            )

        validate_flow(flow, network)

        self.network = network
        self.flow = flow
        self.dt = dt
        self.collision_tolerance = collision_tolerance
        self.override = behavior

        pending = flow.spawn_records()
        if spawn_jitter > 0:
            rng = np.random.default_rng(seed)
            pending = sorted(
                (
                    replace(
                        record,
                        spawn_time=record.spawn_time
                        + float(rng.uniform(0.0, spawn_jitter)),
                    )
                    for record in pending
                ),
                key=lambda record: (record.spawn_time, record.id),
            )

        self.pending: list[SpawnRecord] = pending

        needed = []
        for record in pending:
            needed.extend(self.behavior_of(record).models())

        self.models = ModelTable.load(needed, runner)

        self.active: dict[str, Vehicle] = {}
        self.finished: dict[str, Vehicle] = {}
        self.steps = 0
        self.spawned = 0
        self.decisions = 0
        self.collisions = 0
        self.decision_hook: Optional[DecisionHook] = None
        self._occupancy: dict[tuple[str, int], list[Vehicle]] = {}

        LOGGER.info(
            "initialized: %d vehicles scheduled, %d models loaded, dt %s",
            len(pending),
            len(self.models.models),
            dt,
        )

    @property
    def clock(self) -> float:
        return self.steps * self.dt

    def behavior_of(self, record: SpawnRecord) -> BehaviorSpec:
        if self.override is not None:
            return self.override

        return self.flow.behavior(record.behavior)

    @property
    def conserved(self) -> bool:
        """Whether every spawned vehicle is either active or finished"""
        return self.spawned == len(self.active) + len(self.finished)

    def summary(self) -> dict[str, int | float]:
        return {
            "steps": self.steps,
            "time": self.clock,
            "spawned": self.spawned,
            "active": len(self.active),
            "finished": len(self.finished),
            "pending": len(self.pending),
            "collisions": self.collisions,
            "decisions": self.decisions,
        }

    def occupancy(self, road: str, lane: int) -> Sequence[Vehicle]:
        """Vehicles on a lane, front first"""
        return self._occupancy.get((road, lane), ())

    def _rebuild(self):
        lanes: dict[tuple[str, int], list[Vehicle]] = defaultdict(list)
        for vehicle in self.active.values():
            lanes[(vehicle.road_id, vehicle.lane_index)].append(vehicle)

        for vehicles in lanes.values():
            vehicles.sort(key=lambda vehicle: (-vehicle.position, vehicle.id))

        self._occupancy = dict(lanes)

    def _side(self, vehicle: Vehicle, road: Road, lane: int) -> Optional[SideLane]:
        if not 0 <= lane < len(road.lanes):
            return None

        others = self.occupancy(road.id, lane)
        index = bisect_left(others, -vehicle.position, key=_position_key)

        gap_ahead, lead_speed = NO_GAP, 0.0
        if index > 0:
            ahead = others[index - 1]
            gap_ahead = max(
                ahead.position - ahead.params.length - vehicle.position, 0.0
            )
            lead_speed = ahead.speed

        gap_behind, follower_speed = NO_GAP, 0.0
        if index < len(others):
            behind = others[index]
            gap_behind = max(
                vehicle.position - vehicle.params.length - behind.position, 0.0
            )
            follower_speed = behind.speed

        return SideLane(gap_ahead, gap_behind, lead_speed, follower_speed)

    def lane_surroundings(self, vehicle: Vehicle) -> Surroundings:
        """What a vehicle sees when choosing a lane"""
        road = self.network.road(vehicle.road_id)
        lane = road.lane(vehicle.lane_index)
        leader = leader_of(vehicle, self.occupancy(road.id, lane.index))

        return Surroundings(
            lane.max_speed,
            road.length - vehicle.position,
            len(road.lanes),
            leader,
            LaneContext(
                leader.gap if leader else NO_GAP,
                leader.leader_speed if leader else 0.0,
                self._side(vehicle, road, lane.index - 1),
                self._side(vehicle, road, lane.index + 1),
            ),
        )

    def follow_surroundings(self, vehicle: Vehicle) -> Surroundings:
        """What a vehicle sees when choosing a speed"""
        road = self.network.road(vehicle.road_id)
        lane = road.lane(vehicle.lane_index)
        distance = road.length - vehicle.position

        leader = leader_of(vehicle, self.occupancy(road.id, lane.index))

        following = vehicle.next_road_id
        if following is not None:
            if leader is None:
                next_road = self.network.road(following)
                ahead = self.occupancy(following, next_road.lane(lane.index).index)
                if ahead:
                    last = ahead[-1]
                    leader = LeaderInfo(
                        max(distance + last.position - last.params.length, 0.0),
                        last.speed,
                        last.params.decel,
                    )

            signal = self.network.signal_for(road.id)
            movement = self.network.movement_between(road.id, following)
            if (
                signal is not None
                and movement is not None
                and not signal.is_green(road.id, movement, self.clock)
            ):
                stop = LeaderInfo(
                    max(distance - STOP_LINE_MARGIN, 0.0), 0.0, vehicle.params.decel
                )
                if leader is None or stop.gap < leader.gap:
                    leader = stop

        return Surroundings(lane.max_speed, distance, len(road.lanes), leader)

    def step(self) -> list[TrajectoryRecord]:
        """Advance the simulation by one step

        Returns:
            A record for every vehicle active after the step and every
            vehicle that finished during it, ordered by vehicle id
        """
        clock = self.clock
        time = (self.steps + 1) * self.dt
        events: dict[str, list[Event]] = defaultdict(list)
        vehicles = [self.active[id] for id in sorted(self.active)]

        # lane choices
        choices: dict[str, LaneChoice] = {}
        for vehicle in vehicles:
            lane_change = vehicle.behavior.lane_change
            if not lane_change.enabled and self.decision_hook is None:
                continue

            surroundings = self.lane_surroundings(vehicle)
            choice = LaneChoice.STAY
            if lane_change.enabled:
                choice = lane_change.choose(
                    vehicle, surroundings, clock=clock, dt=self.dt, models=self.models
                )
                self.decisions += 1

            if self.decision_hook is not None:
                self.decision_hook(
                    Task.LANE_CHANGE, vehicle, surroundings, float(choice.value)
                )

            if choice is not LaneChoice.STAY:
                choices[vehicle.id] = choice

        # granted in id order against the lanes as they were
        granted: dict[tuple[str, int], list[Vehicle]] = defaultdict(list)
        for vehicle in vehicles:
            choice = choices.get(vehicle.id)
            if choice is None:
                continue

            road = self.network.road(vehicle.road_id)
            target = vehicle.lane_index + choice.offset
            if not 0 <= target < len(road.lanes):
                continue

            if any(
                _bodies_overlap(vehicle, other)
                for other in self.occupancy(road.id, target)
            ) or any(
                _slots_overlap(vehicle, other) for other in granted[(road.id, target)]
            ):
                continue

            granted[(road.id, target)].append(vehicle)

        for (_, target), movers in granted.items():
            for vehicle in movers:
                event = (
                    Event.LANE_CHANGE_LEFT
                    if target < vehicle.lane_index
                    else Event.LANE_CHANGE_RIGHT
                )
                vehicle.lane_index = target
                events[vehicle.id].append(event)

        if granted:
            self._rebuild()

        # speeds
        actions = []
        for vehicle in vehicles:
            surroundings = self.follow_surroundings(vehicle)
            speed = vehicle.behavior.car_follow.target_speed(
                vehicle, surroundings, clock=clock, dt=self.dt, models=self.models
            )
            self.decisions += 1

            if self.decision_hook is not None:
                self.decision_hook(Task.FOLLOW_SPEED, vehicle, surroundings, speed)

            actions.append((vehicle, Action(speed), surroundings.lane_max_speed))

        for vehicle, action, lane_max_speed in actions:
            advance(vehicle, action, self.dt, lane_max_speed)

        # road ends
        finishers = []
        for vehicle in vehicles:
            while True:
                transition = transition_at_lane_end(vehicle, self.network, time)

                if transition is Transition.MOVED:
                    events[vehicle.id].append(Event.TRANSITION)
                    continue
                elif transition is Transition.FINISHED:
                    events[vehicle.id].append(Event.FINISH)
                    finishers.append(vehicle)

                break

        for vehicle in finishers:
            del self.active[vehicle.id]
            self.finished[vehicle.id] = vehicle

        self._rebuild()

        # spawns
        remaining = []
        for index, record in enumerate(self.pending):
            if record.spawn_time > clock:
                remaining.extend(self.pending[index:])
                break

            lane = self._spawn_lane(record)
            if lane is None:
                LOGGER.debug("no room to spawn %s at %s", record.id, clock)
                remaining.append(record)
                continue

            vehicle = Vehicle(
                record.id,
                record.params,
                record.route,
                self.behavior_of(record),
                lane_index=lane,
                spawn_time=time,
            )
            self.active[vehicle.id] = vehicle
            self._occupancy.setdefault((vehicle.road_id, lane), []).append(vehicle)
            self.spawned += 1
            events[vehicle.id].append(Event.SPAWN)

        self.pending = remaining

        # collisions
        for (road, lane), occupants in self._occupancy.items():
            for front, back in zip(occupants, occupants[1:]):
                gap = front.position - front.params.length - back.position
                if gap < -self.collision_tolerance:
                    LOGGER.debug(
                        "collision at %s: %s into %s on %s lane %d (gap %.6f)",
                        time,
                        back.id,
                        front.id,
                        road,
                        lane,
                        gap,
                    )
                    self.collisions += 1
                    events[back.id].append(Event.COLLISION)

        self.steps += 1

        logged = sorted(
            [*self.active.values(), *finishers], key=lambda vehicle: vehicle.id
        )

        return [
            TrajectoryRecord(
                self.steps,
                time,
                vehicle.id,
                vehicle.road_id,
                vehicle.lane_index,
                vehicle.position,
                vehicle.speed,
                strongest(events.get(vehicle.id, ())),
            )
            for vehicle in logged
        ]

    def _spawn_lane(self, record: SpawnRecord) -> Optional[int]:
        road = self.network.road(record.route[0])
        room = record.params.min_gap + record.params.length

        lanes = range(len(road.lanes)) if record.lane is None else [record.lane]
        for lane in lanes:
            occupants = self.occupancy(road.id, lane)
            if not occupants or (
                occupants[-1].position - occupants[-1].params.length >= room
            ):
                return lane

        return None

    def run(
        self, steps: int, sink: Optional[TrajectoryWriter] = None
    ) -> TrajectoryLog:
        """Run a number of steps

        Args:
            steps: How many steps to run
            sink: If given, records are written to it as they are made

        Raises:
            LogSinkError: if the sink can't be written to
        """
        if steps < 0:
            raise InputValidationError(f"steps must be nonnegative: {steps}")

        log = TrajectoryLog()
        for _ in range(steps):
            records = self.step()
            log.extend(records)

            if sink is not None:
                sink.write(records)

        LOGGER.info(
            "ran %d steps: %d spawned, %d finished, %d collisions",
            steps,
            self.spawned,
            len(self.finished),
            self.collisions,
        )

        return log


def log_bc_dataset(
    engine: Engine, steps: int, task: Task, *, allow_learned_teacher: bool = False
) -> BcDataset:
    """Run a simulation and record each decision a model makes for a task

    Rows are the features the model saw and labels are what it chose:
    a target speed, or 0/1/2 for left/stay/right. Vehicles with lane
    changing disabled contribute Stay rows.

    Raises:
        LearnedTeacher: if a vehicle would use a learned model for the
            task, unless allow_learned_teacher is set
    """
    specs = [engine.behavior_of(record) for record in engine.pending] + [
        vehicle.behavior for vehicle in engine.active.values()
    ]

    def learned(spec: BehaviorSpec) -> bool:
        if task is Task.FOLLOW_SPEED:
            return spec.car_follow.learned

        return spec.lane_change.learned

    if not allow_learned_teacher and any(learned(spec) for spec in specs):
        raise LearnedTeacher(
            f"a learned {task.value} model would be logged as the teacher"
        )

    rows: list[np.ndarray] = []
    labels: list[float] = []

    def record(
        decided: Task, vehicle: Vehicle, surroundings: Surroundings, label: float
    ):
        if decided is task:
            rows.append(
                extract_features(task, vehicle, surroundings, engine.clock, engine.dt)
            )
            labels.append(label)

    engine.decision_hook = record
    try:
        engine.run(steps)
    finally:
        engine.decision_hook = None

    if not rows:
        return BcDataset.empty(task)

    return BcDataset(task, np.array(rows), np.array(labels, dtype=np.float64))


__all__ = ("DecisionHook", "Engine", "STOP_LINE_MARGIN", "log_bc_dataset")
