import pytest


def _constant_follow_model(path, speed: float):
    """Save a followSpeed model that always asks for the same speed"""
    import numpy as np

    from embedsim.learned.features import FeatureMask, Task
    from embedsim.learned.mlp import MlpModel
    from embedsim.learned.modelfile import save_model

    save_model(
        MlpModel(
            Task.FOLLOW_SPEED,
            FeatureMask.full(Task.FOLLOW_SPEED),
            (np.zeros((1, 10)),),
            (np.array([speed]),),
            np.zeros(10),
            np.ones(10),
        ),
        path,
    )

    return path


def _rows(log, vehicle):
    return [record for record in log if record.vehicle_id == vehicle]


def test_free_acceleration(corridor, flow):
    from embedsim.engine.simulation import Engine
    from embedsim.engine.trajectory import Event

    engine = Engine(corridor((1000.0,)), flow([("car", 0.0)]))
    log = engine.run(20)

    assert [record.step for record in log] == list(range(1, 21))
    assert log.records[0].event is Event.SPAWN
    assert (log.records[0].position, log.records[0].speed) == (0.0, 0.0)
    assert log.records[0].time == 1.0

    speed, position = 0.0, 0.0
    for record in log.records[1:]:
        speed = min(speed + 2.0, 13.89)
        position += speed

        assert record.speed == pytest.approx(speed)
        assert record.position == pytest.approx(position)
        assert record.event is Event.NONE
        assert record.road_id == "r0"


def test_finish(corridor, flow):
    from embedsim.engine.simulation import Engine
    from embedsim.engine.trajectory import Event

    engine = Engine(corridor((50.0,)), flow([("car", 0.0)]))
    log = engine.run(15)

    # 0, 2, 6, 12, 20, 30, 42, 55.89
    assert len(log) == 8
    assert log.records[-1].event is Event.FINISH
    assert log.records[-1].time == 8.0
    assert log.count(Event.FINISH) == 1

    assert engine.finished["car"].finish_time == 8.0
    assert engine.summary() == {
        "steps": 15,
        "time": 15.0,
        "spawned": 1,
        "active": 0,
        "finished": 1,
        "pending": 0,
        "collisions": 0,
        "decisions": 14,
    }


def test_empty_flow(corridor):
    from embedsim.engine.flow import FlowConfig
    from embedsim.engine.simulation import Engine

    engine = Engine(corridor(), FlowConfig())
    log = engine.run(10)

    assert len(log) == 0
    assert log.end_time == 0.0
    assert engine.clock == 10.0
    assert engine.conserved


def test_deferred_spawn(corridor, flow):
    from embedsim.engine.simulation import Engine
    from embedsim.engine.trajectory import Event

    engine = Engine(corridor((1000.0,)), flow([("a", 0.0), ("b", 0.0)], lane=0))
    log = engine.run(6)

    # a is at 12 after step 4, 7 m of room is too little for b
    assert [record.step for record in _rows(log, "b")] == [5, 6]
    assert _rows(log, "b")[0].event is Event.SPAWN
    assert engine.active["b"].spawn_time == 5.0
    assert engine.spawned == 2

    # with a second lane there's room straight away
    engine = Engine(corridor((1000.0,), lanes=2), flow([("a", 0.0), ("b", 0.0)]))
    log = engine.run(1)
    assert [(record.vehicle_id, record.lane_index) for record in log] == [
        ("a", 0),
        ("b", 1),
    ]


def test_validation(corridor, flow):
    from embedsim.engine.simulation import Engine
    from embedsim.errors import FlowValidationError, InputValidationError

    network = corridor((100.0, 100.0))

    with pytest.raises(InputValidationError):
        Engine(network, flow([("a", 0.0)]), dt=0.0)

    with pytest.raises(InputValidationError):
        Engine(network, flow([("a", 0.0)]), spawn_jitter=-1.0)

    with pytest.raises(FlowValidationError, match="unknown road"):
        Engine(network, flow([("a", 0.0)], route=("r0", "r7")))

    with pytest.raises(FlowValidationError, match="doesn't follow"):
        Engine(network, flow([("a", 0.0)], route=("r1", "r0")))

    with pytest.raises(FlowValidationError, match="duplicate"):
        Engine(network, flow([("a", 0.0), ("a", 1.0)]))

    with pytest.raises(FlowValidationError, match="no lane"):
        Engine(network, flow([("a", 0.0)], lane=1))

    with pytest.raises(InputValidationError):
        Engine(network, flow([("a", 0.0)])).run(-1)


def test_red_signal(corridor, flow):
    from embedsim.engine.simulation import STOP_LINE_MARGIN, Engine

    network = corridor((100.0, 100.0), phases=[(False, 1000.0)])
    engine = Engine(network, flow([("car", 0.0)], route=("r0", "r1")))
    log = engine.run(100)

    assert {record.road_id for record in log} == {"r0"}
    assert max(record.position for record in log) <= 100.0 - STOP_LINE_MARGIN

    car = engine.active["car"]
    assert car.position > 98.0
    assert car.speed < 0.5


def test_signal_turns_green(corridor, flow):
    from embedsim.engine.simulation import Engine
    from embedsim.engine.trajectory import Event

    network = corridor((100.0, 100.0), phases=[(False, 40.0), (True, 1000.0)])
    engine = Engine(network, flow([("car", 0.0)], route=("r0", "r1")))
    log = engine.run(80)

    assert engine.finished["car"].finish_time <= 80.0
    assert log.count(Event.TRANSITION) == 1
    assert min(record.time for record in log if record.road_id == "r1") > 40.0


def test_platoon(corridor):
    from embedsim.engine.behavior import BehaviorSpec, KraussFollow, NoLaneChange
    from embedsim.engine.flow import FlowConfig, SpawnRecord
    from embedsim.engine.simulation import Engine
    from embedsim.engine.trajectory import Event
    from embedsim.vehicle import VehicleParams

    slow = VehicleParams(max_speed=8.0)
    vehicles = [SpawnRecord("v00", 0.0, ("r0",), slow)] + [
        SpawnRecord(f"v{index:02}", 5.0 * index, ("r0",)) for index in range(1, 10)
    ]
    flow = FlowConfig(
        tuple(vehicles), {"default": BehaviorSpec(KraussFollow(), NoLaneChange())}
    )

    engine = Engine(corridor((2000.0,)), flow)
    log = engine.run(200)

    assert engine.spawned == 10
    assert engine.collisions == 0
    assert log.count(Event.COLLISION) == 0

    # everyone ends up stuck behind the slow vehicle
    assert all(vehicle.speed <= 8.0 + 1e-6 for vehicle in engine.active.values())


def test_conservation(sample_files):
    from embedsim import initialize

    network, flow = sample_files
    engine = initialize(network, flow)

    assert len(engine.pending) == 122

    for _ in range(400):
        records = engine.step()
        assert engine.conserved
        assert engine.spawned + len(engine.pending) == 122
        assert [record.vehicle_id for record in records] == sorted(
            record.vehicle_id for record in records
        )

    assert engine.finished


def test_determinism(tmp_path, sample_files):
    from embedsim import initialize
    from embedsim.engine.trajectory import TrajectoryLog, TrajectoryWriter

    network, flow = sample_files
    paths = [tmp_path / "first.csv", tmp_path / "second.csv"]

    for path in paths:
        engine = initialize(network, flow)
        with TrajectoryWriter(path) as writer:
            engine.run(300, writer)

    assert paths[0].read_bytes() == paths[1].read_bytes()

    log = TrajectoryLog.read(paths[0])
    assert log.records[0].step == 1
    assert log.end_time == 300.0


def test_spawn_jitter(corridor, flow):
    from embedsim.engine.simulation import Engine

    network = corridor((500.0,), lanes=3)
    vehicles = flow([(f"v{index}", 10.0 * index) for index in range(10)])

    def times(seed):
        engine = Engine(network, vehicles, spawn_jitter=4.0, seed=seed)
        return {record.id: record.spawn_time for record in engine.pending}

    first = times(1)
    assert first == times(1)
    assert first != times(2)

    for index in range(10):
        assert 10.0 * index <= first[f"v{index}"] <= 10.0 * index + 4.0

    plain = Engine(network, vehicles)
    assert [record.spawn_time for record in plain.pending] == [
        10.0 * index for index in range(10)
    ]


def test_behavior_override(corridor, flow):
    from embedsim.engine.behavior import BehaviorSpec, IdmFollow, NoLaneChange
    from embedsim.engine.simulation import Engine

    spec = BehaviorSpec(IdmFollow(desired_speed=10.0), NoLaneChange())
    engine = Engine(corridor((1000.0,)), flow([("a", 0.0)]), behavior=spec)
    engine.run(60)

    vehicle = engine.active["a"]
    assert vehicle.behavior is spec
    assert vehicle.speed == pytest.approx(10.0, abs=0.1)


def test_learned_follow(tmp_path, corridor, flow):
    from embedsim.engine.behavior import BehaviorSpec, LearnedFollow, NoLaneChange
    from embedsim.engine.simulation import Engine

    model = _constant_follow_model(tmp_path / "follow.mlpb", 5.0)
    spec = BehaviorSpec(LearnedFollow(model), NoLaneChange())

    engine = Engine(corridor((1000.0,)), flow([("car", 0.0)], behavior=spec))
    log = engine.run(6)

    assert [record.speed for record in log] == [0.0, 5.0, 5.0, 5.0, 5.0, 5.0]
    assert [record.position for record in log] == [0.0, 5.0, 10.0, 15.0, 20.0, 25.0]
    assert engine.decisions == 5

    # clamped to the lane's speed limit
    fast = _constant_follow_model(tmp_path / "fast.mlpb", 50.0)
    spec = BehaviorSpec(LearnedFollow(fast), NoLaneChange())
    engine = Engine(corridor((1000.0,)), flow([("car", 0.0)], behavior=spec))
    assert engine.run(2).records[-1].speed == 13.89


def test_remote_style_runner(tmp_path, corridor, flow):
    import numpy as np

    from embedsim.engine.behavior import BehaviorSpec, LearnedFollow, NoLaneChange
    from embedsim.engine.simulation import Engine

    class Counting:
        def __init__(self):
            self.calls = 0

        def follow_speed(self, model, features):
            self.calls += 1
            return 3.0

        def lane_logits(self, model, features):
            return np.array([0.0, 1.0, 0.0])

    model = _constant_follow_model(tmp_path / "follow.mlpb", 5.0)
    spec = BehaviorSpec(LearnedFollow(model), NoLaneChange())
    runner = Counting()

    vehicles = flow([("a", 0.0), ("b", 20.0)], behavior=spec)
    engine = Engine(corridor((1000.0,)), vehicles, runner=runner)
    log = engine.run(10)

    assert runner.calls == engine.decisions
    assert {record.speed for record in _rows(log, "a")[1:]} == {3.0}


def test_model_errors(tmp_path, corridor, flow, make_model):
    from embedsim.engine.behavior import (
        BehaviorSpec,
        LearnedFollow,
        LearnedLaneChange,
    )
    from embedsim.engine.simulation import Engine
    from embedsim.errors import ModelLoadError
    from embedsim.learned.features import Task
    from embedsim.learned.modelfile import save_model

    network = corridor()

    missing = BehaviorSpec(LearnedFollow(tmp_path / "missing.mlpb"))
    with pytest.raises(ModelLoadError):
        Engine(network, flow([("a", 0.0)], behavior=missing))

    garbage = tmp_path / "garbage.mlpb"
    garbage.write_bytes(b"MLPB")
    unreadable = BehaviorSpec(LearnedFollow(garbage))
    with pytest.raises(ModelLoadError):
        Engine(network, flow([("a", 0.0)], behavior=unreadable))

    follow = tmp_path / "follow.mlpb"
    save_model(make_model(Task.FOLLOW_SPEED), follow)
    wrong = BehaviorSpec(lane_change=LearnedLaneChange(follow))
    with pytest.raises(ModelLoadError, match="followSpeed"):
        Engine(network, flow([("a", 0.0)], behavior=wrong))

    # nothing is loaded for vehicles that never exist
    Engine(network, flow([]), behavior=missing)


def test_mixed_fleet(tmp_path, corridor):
    from embedsim.engine.behavior import (
        BehaviorSpec,
        KraussFollow,
        LearnedFollow,
        NoLaneChange,
    )
    from embedsim.engine.flow import FlowConfig, SpawnRecord
    from embedsim.engine.simulation import Engine

    model = _constant_follow_model(tmp_path / "follow.mlpb", 5.0)
    flow = FlowConfig(
        (
            SpawnRecord("rule", 0.0, ("r0",), lane=0),
            SpawnRecord("learned", 0.0, ("r0",), behavior="cloned", lane=1),
        ),
        {
            "default": BehaviorSpec(KraussFollow(), NoLaneChange()),
            "cloned": BehaviorSpec(LearnedFollow(model), NoLaneChange()),
        },
    )

    engine = Engine(corridor((1000.0,), lanes=2), flow)
    log = engine.run(4)

    assert [record.speed for record in _rows(log, "rule")] == [0.0, 2.0, 4.0, 6.0]
    assert [record.speed for record in _rows(log, "learned")] == [0.0, 5.0, 5.0, 5.0]
    assert [record.lane_index for record in _rows(log, "learned")] == [1] * 4


def test_lane_change(corridor):
    from embedsim.engine.behavior import BehaviorSpec, GapLaneChange, KraussFollow
    from embedsim.engine.flow import FlowConfig, SpawnRecord
    from embedsim.engine.simulation import Engine
    from embedsim.engine.trajectory import Event
    from embedsim.vehicle import VehicleParams

    flow = FlowConfig(
        (
            SpawnRecord("blocker", 0.0, ("r0",), VehicleParams(max_speed=3.0), lane=0),
            SpawnRecord("car", 5.0, ("r0",), lane=0),
        ),
        {"default": BehaviorSpec(KraussFollow(), GapLaneChange())},
    )

    engine = Engine(corridor((1000.0,), lanes=2), flow)
    log = engine.run(20)

    car = _rows(log, "car")
    assert car[0].lane_index == 0
    assert [record.event for record in car].count(Event.LANE_CHANGE_RIGHT) == 1
    assert car[-1].lane_index == 1
    assert engine.active["car"].position > engine.active["blocker"].position

    # the blocker has the road ahead to itself
    assert all(record.lane_index == 0 for record in _rows(log, "blocker"))


@pytest.mark.parametrize(
    "inner, outer, event",
    [("a", "b", "laneChangeRight"), ("b", "a", "laneChangeLeft")],
)
def test_lane_change_conflict(corridor, inner, outer, event):
    from embedsim.engine.behavior import BehaviorSpec, KraussFollow, LaneChange
    from embedsim.engine.flow import FlowConfig, SpawnRecord
    from embedsim.engine.simulation import Engine
    from embedsim.engine.trajectory import Event
    from embedsim.vehicle import LaneChoice

    class TowardMiddle(LaneChange):
        kind = "middle"

        def choose(self, vehicle, surroundings, *, clock, dt, models):
            return [LaneChoice.RIGHT, LaneChoice.STAY, LaneChoice.LEFT][
                vehicle.lane_index
            ]

    flow = FlowConfig(
        (
            SpawnRecord(inner, 0.0, ("r0",), lane=0),
            SpawnRecord(outer, 0.0, ("r0",), lane=2),
        ),
        {"default": BehaviorSpec(KraussFollow(), TowardMiddle())},
    )

    engine = Engine(corridor((1000.0,), lanes=3), flow)
    log = engine.run(6)

    # both want the middle lane alongside each other, the lower id gets it
    winner, loser = _rows(log, "a"), _rows(log, "b")
    assert [record.lane_index for record in winner] == [winner[0].lane_index] + [1] * 5
    assert winner[1].event.value == event
    assert [record.event for record in winner].count(Event(event)) == 1

    # and then stays refused while the two are side by side
    assert [record.lane_index for record in loser] == [loser[0].lane_index] * 6
    assert loser[0].lane_index != 1
    assert log.count(Event.LANE_CHANGE_LEFT) + log.count(Event.LANE_CHANGE_RIGHT) == 1
    assert engine.collisions == 0


def _reckless_flow():
    """A slow leader and a vehicle behind it that ignores it"""
    from embedsim.engine.behavior import BehaviorSpec, CarFollow, KraussFollow
    from embedsim.engine.flow import FlowConfig, SpawnRecord
    from embedsim.vehicle import VehicleParams

    class Reckless(CarFollow):
        kind = "reckless"

        def target_speed(self, vehicle, surroundings, *, clock, dt, models):
            return surroundings.lane_max_speed

    return FlowConfig(
        (
            SpawnRecord("front", 0.0, ("r0",), VehicleParams(max_speed=3.0)),
            SpawnRecord("rear", 0.0, ("r0",), behavior="reckless"),
        ),
        {
            "default": BehaviorSpec(KraussFollow()),
            "reckless": BehaviorSpec(Reckless()),
        },
    )


def test_collision(corridor):
    from embedsim.engine.simulation import Engine
    from embedsim.engine.trajectory import Event

    engine = Engine(corridor((1000.0,)), _reckless_flow())
    log = engine.run(10)

    # front: 0, 2, 5, 8, 11, 14, 17. rear waits for 7 m of room, spawns in
    # step 6 and is at 13.89 in step 7, 1.89 m into the front vehicle
    assert _rows(log, "rear")[0].step == 6
    collisions = [record for record in log if record.event is Event.COLLISION]
    assert [(record.step, record.vehicle_id) for record in collisions] == [(7, "rear")]
    assert engine.collisions == 1
    assert engine.summary()["collisions"] == 1

    # the front vehicle isn't the one logged
    assert all(record.event is Event.NONE for record in _rows(log, "front")[1:])


@pytest.mark.parametrize("tolerance, collisions", [(1.8, 1), (1.9, 0), (5.0, 0)])
def test_collision_tolerance(corridor, tolerance, collisions):
    from embedsim.engine.simulation import Engine
    from embedsim.engine.trajectory import Event

    engine = Engine(
        corridor((1000.0,)), _reckless_flow(), collision_tolerance=tolerance
    )
    log = engine.run(10)

    assert engine.collisions == collisions
    assert log.count(Event.COLLISION) == collisions


def test_log_bc_dataset(sample_files):
    import numpy as np

    from embedsim import initialize
    from embedsim.engine.simulation import log_bc_dataset
    from embedsim.engine.trajectory import Event
    from embedsim.learned.features import Task, catalog

    network, flow = sample_files

    dataset = log_bc_dataset(initialize(network, flow), 120, Task.FOLLOW_SPEED)

    # every vehicle decides once in every step it starts active
    log = initialize(network, flow).run(120)
    assert len(dataset) == len(log) - log.count(Event.SPAWN)
    assert len(dataset) > 0

    assert dataset.features.shape[1] == len(catalog(Task.FOLLOW_SPEED))
    assert (dataset.labels >= 0).all()
    assert (dataset.labels <= 13.89).all()
    assert (dataset.features[:, 8] == 1.0).all()

    lanes = log_bc_dataset(initialize(network, flow), 120, Task.LANE_CHANGE)
    assert len(lanes) == len(dataset)
    assert set(np.unique(lanes.labels)) <= {0.0, 1.0, 2.0}


def test_log_bc_dataset_no_decisions(corridor, flow):
    from embedsim.engine.simulation import Engine, log_bc_dataset
    from embedsim.learned.features import Task

    engine = Engine(corridor(), flow([("a", 50.0)]))
    dataset = log_bc_dataset(engine, 10, Task.FOLLOW_SPEED)

    assert len(dataset) == 0
    assert engine.decision_hook is None


def test_learned_teacher(tmp_path, corridor, flow):
    from embedsim.engine.behavior import BehaviorSpec, LearnedFollow, NoLaneChange
    from embedsim.engine.simulation import Engine, log_bc_dataset
    from embedsim.errors import LearnedTeacher
    from embedsim.learned.features import Task

    model = _constant_follow_model(tmp_path / "follow.mlpb", 5.0)
    spec = BehaviorSpec(LearnedFollow(model), NoLaneChange())

    def engine():
        return Engine(corridor((1000.0,)), flow([("a", 0.0)], behavior=spec))

    with pytest.raises(LearnedTeacher):
        log_bc_dataset(engine(), 5, Task.FOLLOW_SPEED)

    cloned = log_bc_dataset(engine(), 5, Task.FOLLOW_SPEED, allow_learned_teacher=True)
    assert cloned.labels.tolist() == [5.0] * 4

    # only the followSpeed model is learned, lane rows come from the rule
    lanes = log_bc_dataset(engine(), 5, Task.LANE_CHANGE)
    assert lanes.labels.tolist() == [1.0] * 4
