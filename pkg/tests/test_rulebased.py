import math

import pytest


def _vehicle(speed: float = 0.0, **params):
    from embedsim.vehicle import Vehicle, VehicleParams

    return Vehicle("ego", VehicleParams(**params), ("r0",), speed=speed)


def test_krauss_follow_speed():
    from embedsim.rulebased import krauss_follow_speed
    from embedsim.vehicle import LeaderInfo

    # free acceleration
    assert krauss_follow_speed(_vehicle(10.0), None, 13.89, 1.0) == 12.0
    assert krauss_follow_speed(_vehicle(13.0), None, 13.89, 1.0) == 13.89
    assert krauss_follow_speed(_vehicle(16.0), None, 30.0, 1.0) == 16.67
    assert krauss_follow_speed(_vehicle(0.0), None, 13.89, 0.5) == 1.0

    # the safe speed collapses to 0 behind a stopped leader with no gap
    stopped = LeaderInfo(0.0, 0.0, 4.5)
    assert krauss_follow_speed(_vehicle(10.0), stopped, 13.89, 1.0) == 0.0

    # the safe speed binds
    assert krauss_follow_speed(
        _vehicle(10.0), LeaderInfo(20.0, 8.0, 4.5), 13.89, 1.0
    ) == pytest.approx(-4.5 + math.sqrt(4.5**2 + 8**2 + 2 * 4.5 * 20), abs=1e-12)
    assert krauss_follow_speed(
        _vehicle(10.0), LeaderInfo(20.0, 8.0, 4.5), 13.89, 1.0
    ) == pytest.approx(11.7558, abs=1e-4)

    # -4.5 + sqrt(20.25 + 90) = 6
    assert krauss_follow_speed(
        _vehicle(10.0), LeaderInfo(10.0, 0.0, 4.5), 13.89, 1.0
    ) == pytest.approx(6.0)

    # a far leader doesn't
    far = LeaderInfo(500.0, 0.0, 4.5)
    assert krauss_follow_speed(_vehicle(10.0), far, 13.89, 1.0) == 12.0


def test_idm_follow_speed():
    from embedsim.rulebased import IDM_MIN_GAP, IdmParams, idm_follow_speed
    from embedsim.vehicle import LeaderInfo

    # from rest with nothing ahead, accelerate at a
    assert idm_follow_speed(_vehicle(0.0), None, 13.89, 1.0) == 2.0

    # at the desired speed, stay there
    assert idm_follow_speed(
        _vehicle(15.0), None, 20.0, 1.0, IdmParams(desired_speed=15.0)
    ) == pytest.approx(15.0)

    # the desired speed defaults to the vehicle's max speed
    assert idm_follow_speed(_vehicle(16.67), None, 20.0, 1.0) == pytest.approx(16.67)

    vehicle = _vehicle(10.0, accel=2.0, decel=4.5, min_gap=2.0, headway=1.5)
    speed = idm_follow_speed(
        vehicle, LeaderInfo(30.0, 10.0, 4.5), 13.89, 1.0, IdmParams(15.0, 4.0)
    )
    assert speed == pytest.approx(10 + 2 * (1 - (10 / 15) ** 4 - (17 / 30) ** 2))
    assert speed == pytest.approx(10.963, abs=1e-3)

    # closing in makes the desired gap bigger
    closing = idm_follow_speed(
        vehicle, LeaderInfo(30.0, 5.0, 4.5), 13.89, 1.0, IdmParams(15.0, 4.0)
    )
    assert closing < speed

    # a leader pulling away shrinks the desired gap below min_gap:
    # s* = 2 + 15 - 100 / 6 = 1/3
    pulling_away = idm_follow_speed(
        vehicle, LeaderInfo(8.0, 20.0, 4.5), 13.89, 1.0, IdmParams(15.0, 4.0)
    )
    expected = 10 + 2 * (1 - (10 / 15) ** 4 - ((1 / 3) / 8) ** 2)
    assert pulling_away == pytest.approx(expected)
    assert pulling_away == pytest.approx(11.6015, abs=1e-4)

    # a gap at or below zero brakes as hard as possible
    for gap in (0.0, -1.0, IDM_MIN_GAP):
        assert idm_follow_speed(vehicle, LeaderInfo(gap, 0.0, 4.5), 13.89, 1.0) == 0.0

    # the lane limit caps acceleration
    assert idm_follow_speed(_vehicle(13.5), None, 13.89, 1.0) == 13.89


def test_follow_speed_properties():
    import random

    from embedsim.rulebased import idm_follow_speed, krauss_follow_speed
    from embedsim.vehicle import LeaderInfo

    rng = random.Random(11)

    for _ in range(2000):
        vehicle = _vehicle(
            rng.uniform(0.0, 16.67),
            accel=rng.uniform(0.5, 3.0),
            decel=rng.uniform(2.0, 9.0),
            min_gap=rng.uniform(1.0, 4.0),
            headway=rng.uniform(0.5, 2.5),
        )
        lane_max = rng.uniform(5.0, 30.0)
        dt = rng.choice((0.1, 0.5, 1.0))
        leader_speed = rng.uniform(0.0, 16.67)
        gap = rng.uniform(0.0, 100.0)
        larger = gap + rng.uniform(0.0, 50.0)

        for model in (krauss_follow_speed, idm_follow_speed):
            near = model(vehicle, LeaderInfo(gap, leader_speed, 4.5), lane_max, dt)
            far = model(vehicle, LeaderInfo(larger, leader_speed, 4.5), lane_max, dt)
            free = model(vehicle, None, lane_max, dt)

            for speed in (near, far, free):
                assert 0.0 <= speed <= min(vehicle.params.max_speed, lane_max)

            # monotone in the gap
            assert far >= near
            assert free >= far


def test_krauss_braking_trials():
    """
    A Krauss follower never overlaps a braking leader once the gap
    covers a step of the leader's travel
    """
    import numpy as np

    from embedsim.rulebased import krauss_follow_speed
    from embedsim.vehicle import Action, LeaderInfo, Vehicle, VehicleParams, advance

    rng = np.random.default_rng(2024)
    negative_gaps = 0

    for _ in range(10_000):
        decel = float(rng.uniform(2.0, 9.0))
        dt = float(rng.choice([0.1, 0.5, 1.0]))
        params = VehicleParams(length=4.0, accel=2.0, decel=decel, max_speed=30.0)
        lane_max = 30.0

        leader = Vehicle("leader", params, ("r0",), speed=float(rng.uniform(0, 20)))
        follower = Vehicle("follower", params, ("r0",), speed=float(rng.uniform(0, 20)))

        gap = leader.speed * dt + float(rng.uniform(0.0, 40.0))
        follower.position = 0.0
        leader.position = params.length + gap

        for _ in range(300):
            info = LeaderInfo(
                leader.position - params.length - follower.position,
                leader.speed,
                params.decel,
            )
            speed = krauss_follow_speed(follower, info, lane_max, dt)
            advance(follower, Action(speed), dt, lane_max)
            advance(leader, Action(max(leader.speed - decel * dt, 0.0)), dt, lane_max)

            if leader.position - params.length - follower.position < -1e-9:
                negative_gaps += 1
                break

            if leader.speed == 0.0 and follower.speed < 1e-3:
                break

    assert negative_gaps == 0


def test_rule_lane_change():
    from embedsim.rulebased import LaneContext, SideLane, rule_lane_change
    from embedsim.vehicle import LaneChoice

    vehicle = _vehicle(10.0)

    # no adjacent lanes
    assert rule_lane_change(vehicle, LaneContext(10.0)) is LaneChoice.STAY

    left = LaneContext(10.0, left=SideLane(50.0))
    assert rule_lane_change(vehicle, left, hysteresis=10.0) is LaneChoice.LEFT
    right = LaneContext(10.0, right=SideLane(50.0))
    assert rule_lane_change(vehicle, right, hysteresis=10.0) is LaneChoice.RIGHT

    # equal offers stay, a better one wins
    assert (
        rule_lane_change(
            vehicle, LaneContext(10.0, left=SideLane(50.0), right=SideLane(50.0))
        )
        is LaneChoice.STAY
    )
    assert (
        rule_lane_change(
            vehicle, LaneContext(10.0, left=SideLane(50.0), right=SideLane(60.0))
        )
        is LaneChoice.RIGHT
    )
    assert (
        rule_lane_change(
            vehicle, LaneContext(10.0, left=SideLane(70.0), right=SideLane(60.0))
        )
        is LaneChoice.LEFT
    )

    # the improvement must beat the hysteresis
    assert rule_lane_change(vehicle, LaneContext(10.0, left=SideLane(15.0))) is (
        LaneChoice.STAY
    )
    assert rule_lane_change(vehicle, LaneContext(10.0, left=SideLane(15.5))) is (
        LaneChoice.LEFT
    )

    # the follower in the target lane needs min_gap + its speed * headway
    crowded = SideLane(50.0, gap_behind=12.0, follower_speed=10.0)
    assert rule_lane_change(vehicle, LaneContext(10.0, left=crowded)) is LaneChoice.STAY
    roomy = SideLane(50.0, gap_behind=12.5, follower_speed=10.0)
    assert rule_lane_change(vehicle, LaneContext(10.0, left=roomy)) is LaneChoice.LEFT
    assert (
        rule_lane_change(vehicle, LaneContext(10.0, left=roomy), rear_headway=2.0)
        is LaneChoice.STAY
    )

    # an unacceptable side doesn't block the other
    assert (
        rule_lane_change(vehicle, LaneContext(10.0, left=crowded, right=SideLane(20.0)))
        is LaneChoice.RIGHT
    )
