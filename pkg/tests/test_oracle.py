import pytest


def _keep_right():
    """A lane changer that always asks to move one lane right"""
    from embedsim.engine.behavior import LaneChange
    from embedsim.vehicle import LaneChoice

    class KeepRight(LaneChange):
        kind = "keepRight"

        def choose(self, vehicle, surroundings, *, clock, dt, models):
            return LaneChoice.RIGHT

    return KeepRight()


def _cars(rng, count: int, lanes: int = 1):
    from tests.reference import Car

    return [
        Car(
            f"v{index}",
            float(rng.uniform(0.0, 30.0)),
            length=float(rng.uniform(3.0, 8.0)),
            max_speed=float(rng.uniform(5.0, 20.0)),
            accel=float(rng.uniform(1.0, 3.0)),
            decel=float(rng.uniform(3.0, 8.0)),
            min_gap=float(rng.uniform(1.0, 3.0)),
            lane=int(rng.integers(0, lanes)),
            keep_right=lanes > 1 and bool(rng.integers(0, 2)),
        )
        for index in range(count)
    ]


def _scenario(seed: int):
    import numpy as np

    rng = np.random.default_rng(seed)

    lengths = [float(rng.uniform(30.0, 200.0)) for _ in range(rng.integers(1, 4))]
    limit = float(rng.uniform(8.0, 20.0))
    dt = float(rng.choice([0.5, 1.0]))

    return lengths, limit, dt, _cars(rng, int(rng.integers(1, 6)))


def _signalized_scenario(seed: int):
    import numpy as np

    rng = np.random.default_rng(1000 + seed)

    lengths = [float(rng.uniform(60.0, 200.0)) for _ in range(rng.integers(2, 4))]
    limit = float(rng.uniform(8.0, 20.0))
    dt = float(rng.choice([0.5, 1.0]))
    signal = (float(rng.uniform(5.0, 40.0)), float(rng.uniform(5.0, 40.0)))

    return lengths, limit, dt, signal, _cars(rng, int(rng.integers(2, 8)), lanes=2)


def _engine(lengths, limit, dt, cars, *, lanes=1, signal=None):
    from embedsim.engine.behavior import BehaviorSpec, KraussFollow, NoLaneChange
    from embedsim.engine.flow import FlowConfig, SpawnRecord
    from embedsim.engine.simulation import Engine
    from embedsim.vehicle import VehicleParams
    from tests.conftest import make_corridor

    route = tuple(f"r{index}" for index in range(len(lengths)))

    flow = FlowConfig(
        tuple(
            SpawnRecord(
                car.id,
                car.spawn_time,
                route,
                VehicleParams(
                    length=car.length,
                    max_speed=car.max_speed,
                    accel=car.accel,
                    decel=car.decel,
                    min_gap=car.min_gap,
                ),
                "keepRight" if car.keep_right else "default",
                lane=car.lane,
            )
            for car in cars
        ),
        {
            "default": BehaviorSpec(KraussFollow(), NoLaneChange()),
            "keepRight": BehaviorSpec(KraussFollow(), _keep_right()),
        },
    )

    phases = None
    if signal is not None:
        red, green = signal
        phases = [(False, red), (True, green)]

    network = make_corridor(lengths, lanes=lanes, max_speed=limit, phases=phases)

    return Engine(network, flow, dt=dt)


def _compare(log, expected):
    assert len(log) == len(expected)

    for record, (step, time, vehicle, road, lane, position, speed, event) in zip(
        log, expected
    ):
        assert (record.step, record.vehicle_id, record.road_id, record.lane_index) == (
            step,
            vehicle,
            f"r{road}",
            lane,
        )
        assert record.time == pytest.approx(time)
        assert record.position == pytest.approx(position, abs=1e-9)
        assert record.speed == pytest.approx(speed, abs=1e-9)
        assert record.event.value == event


@pytest.mark.parametrize("seed", range(50))
def test_matches_reference(seed):
    from tests.reference import simulate

    lengths, limit, dt, cars = _scenario(seed)

    engine = _engine(lengths, limit, dt, cars)
    log = engine.run(200)

    expected, collisions = simulate(lengths, limit, cars, 200, dt)

    assert engine.collisions == collisions
    _compare(log, expected)


@pytest.mark.parametrize("seed", range(30))
def test_matches_reference_with_lanes_and_signal(seed):
    from tests.reference import simulate

    lengths, limit, dt, signal, cars = _signalized_scenario(seed)

    engine = _engine(lengths, limit, dt, cars, lanes=2, signal=signal)
    log = engine.run(200)

    expected, collisions = simulate(
        lengths, limit, cars, 200, dt, lanes=2, signal=signal
    )

    assert engine.collisions == collisions
    _compare(log, expected)


def test_forced_lane_change_at_a_signal():
    from embedsim.engine.simulation import STOP_LINE_MARGIN
    from embedsim.engine.trajectory import Event
    from tests.reference import Car, simulate

    def cars():
        return [
            # alongside at first, then the keep-right car pulls ahead and over
            Car("a", 0.0, 5.0, 5.0, 2.0, 4.5, 2.0, lane=1),
            Car("b", 0.0, 5.0, 16.67, 2.0, 4.5, 2.0, lane=0, keep_right=True),
        ]

    lengths, signal = [150.0, 100.0], (30.0, 1000.0)

    engine = _engine(lengths, 13.89, 1.0, cars(), lanes=2, signal=signal)
    log = engine.run(120)

    expected, collisions = simulate(
        lengths, 13.89, cars(), 120, 1.0, lanes=2, signal=signal
    )
    assert engine.collisions == collisions == 0
    _compare(log, expected)

    changes = [
        record
        for record in log
        if record.vehicle_id == "b" and record.event is Event.LANE_CHANGE_RIGHT
    ]
    assert len(changes) == 1
    # refused while the two were side by side
    assert changes[0].step > 2

    # nobody crosses the stop line while it is red
    assert all(
        record.position <= 150.0 - STOP_LINE_MARGIN + 1e-9
        for record in log
        if record.road_id == "r0" and record.time <= 30.0
    )
    assert "r1" in {record.road_id for record in log if record.vehicle_id == "b"}
