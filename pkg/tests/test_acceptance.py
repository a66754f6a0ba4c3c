"""Long-running checks of the whole system

These only run with EMBEDSIM_ACCEPTANCE=1 (``tox -e acceptance``).
"""
from dataclasses import replace


def _bias_model(path, task, bias, hidden=()):
    """Save a model whose output is its final bias whatever the input"""
    import numpy as np

    from embedsim.learned.features import FeatureMask, catalog
    from embedsim.learned.mlp import MlpModel
    from embedsim.learned.modelfile import save_model

    width = len(catalog(task))
    sizes = [width, *hidden, task.outputs]
    biases = [np.zeros(size) for size in sizes[1:]]
    biases[-1] = np.array(bias, dtype=np.float64)

    save_model(
        MlpModel(
            task,
            FeatureMask.full(task),
            tuple(np.zeros((out, into)) for into, out in zip(sizes, sizes[1:])),
            tuple(biases),
            np.zeros(width),
            np.ones(width),
        ),
        path,
    )

    return path


def test_acceptance_sample_finishes(acceptance, sample_files):
    from embedsim import initialize
    from embedsim.engine.trajectory import Event

    network, flow = sample_files
    engine = initialize(network, flow)
    log = engine.run(3600)

    assert engine.spawned == 122
    assert len(engine.finished) == 122
    assert not engine.active
    assert engine.collisions == 0
    assert log.count(Event.FINISH) == 122


def test_acceptance_dataset_rows(acceptance, sample_files):
    from embedsim import initialize
    from embedsim.engine.simulation import log_bc_dataset
    from embedsim.engine.trajectory import Event
    from embedsim.learned.features import Task

    network, flow = sample_files

    log = initialize(network, flow).run(3600)
    dataset = log_bc_dataset(initialize(network, flow), 3600, Task.FOLLOW_SPEED)

    # one decision per vehicle per step it was active before the step
    active_steps = sum(len(records) - 1 for records in log.by_vehicle().values())
    assert len(dataset) == active_steps
    assert len(dataset) == len(log) - log.count(Event.SPAWN)


def test_acceptance_recovery(acceptance, tmp_path, sample_files):
    """Clone the rule-based fleet and compare trajectories"""
    from embedsim import initialize
    from embedsim.engine.behavior import (
        BehaviorSpec,
        LearnedFollow,
        LearnedLaneChange,
    )
    from embedsim.engine.metrics import recovery_metrics
    from embedsim.engine.simulation import log_bc_dataset
    from embedsim.learned.features import FeatureMask, Task
    from embedsim.learned.modelfile import save_model
    from embedsim.learned.training import TrainConfig, bc_train, default_architecture

    network, flow = sample_files

    paths = {}
    for task in Task:
        dataset = log_bc_dataset(initialize(network, flow), 3600, task)
        config = TrainConfig(optimizer="adam", balance_classes=task is Task.LANE_CHANGE)
        result = bc_train(
            dataset, default_architecture(task), FeatureMask.full(task), config
        )
        assert len(result.history) == 300

        paths[task] = tmp_path / f"{task.value}.mlpb"
        save_model(result.model, paths[task])

    assert default_architecture(Task.FOLLOW_SPEED) == [10, 64, 64, 1]
    assert default_architecture(Task.LANE_CHANGE) == [12, 64, 64, 3]

    reference = initialize(network, flow).run(3600)
    candidate = initialize(
        network,
        flow,
        behavior=BehaviorSpec(
            LearnedFollow(paths[Task.FOLLOW_SPEED]),
            LearnedLaneChange(paths[Task.LANE_CHANGE]),
        ),
    ).run(3600)

    metrics = recovery_metrics(reference, candidate)

    assert len(metrics.vehicles) == 122
    assert metrics.displacement.mean < 2.0
    assert metrics.travel_time.mean < 1.0


def _benchmark_scenario():
    from embedsim.engine.flow import generate_flow
    from embedsim.network.grid import generate_grid

    network = generate_grid(5, 5)
    flow = generate_flow(network, interval=10.0, end=3600.0, stagger=1.0)

    return network, flow


def test_acceptance_efficiency(acceptance, tmp_path, run_server):
    from embedsim.bench.harness import ControllerKind, run_benchmark
    from embedsim.engine.simulation import Engine
    from embedsim.learned.features import Task
    from embedsim.network.grid import DEFAULT_MAX_SPEED

    network, flow = _benchmark_scenario()

    # full-sized layers, cruising at the speed limit
    model = _bias_model(
        tmp_path / "follow.mlpb",
        Task.FOLLOW_SPEED,
        [DEFAULT_MAX_SPEED],
        hidden=(64, 64),
    )

    engine = Engine(network, flow)
    busiest = 0
    for _ in range(3600):
        engine.step()
        busiest = max(busiest, len(engine.active))

    assert busiest >= 300

    logs = {kind: tmp_path / f"{kind.value}.csv" for kind in ControllerKind}

    reports = {}
    for kind in (ControllerKind.EMBEDDED_RULE, ControllerKind.EMBEDDED_LEARNED):
        reports[kind] = run_benchmark(
            network, flow, 3600, kind, 3, follow_model=model, log=logs[kind]
        )

    with run_server(model, None) as port:
        reports[ControllerKind.REMOTE_LEARNED] = run_benchmark(
            network,
            flow,
            3600,
            ControllerKind.REMOTE_LEARNED,
            3,
            follow_model=model,
            endpoint=("127.0.0.1", port),
            log=logs[ControllerKind.REMOTE_LEARNED],
        )

    rule = reports[ControllerKind.EMBEDDED_RULE].seconds
    embedded = reports[ControllerKind.EMBEDDED_LEARNED].seconds
    remote = reports[ControllerKind.REMOTE_LEARNED].seconds

    assert remote >= 2 * embedded
    assert embedded <= 1.5 * rule

    # moving the model out of process changes nothing but the time
    assert (
        logs[ControllerKind.EMBEDDED_LEARNED].read_bytes()
        == logs[ControllerKind.REMOTE_LEARNED].read_bytes()
    )

    for report in reports.values():
        assert abs(report.steps_per_second * report.seconds - 3600) <= 3.6


def test_acceptance_scale(acceptance, tmp_path):
    from time import perf_counter

    from embedsim.engine.behavior import (
        BehaviorSpec,
        GapLaneChange,
        IdmFollow,
        KraussFollow,
        LearnedFollow,
        LearnedLaneChange,
    )
    from embedsim.engine.flow import generate_flow
    from embedsim.engine.simulation import Engine
    from embedsim.learned.features import Task
    from embedsim.network.grid import generate_grid

    follow = _bias_model(tmp_path / "follow.mlpb", Task.FOLLOW_SPEED, [9.0], (16,))
    # always stay
    lane = _bias_model(tmp_path / "lane.mlpb", Task.LANE_CHANGE, [0.0, 1.0, 0.0])

    behaviors = {
        "krauss": BehaviorSpec(KraussFollow(), GapLaneChange()),
        "idm": BehaviorSpec(IdmFollow(), GapLaneChange()),
        "cloned": BehaviorSpec(LearnedFollow(follow), GapLaneChange()),
        "cloned-lanes": BehaviorSpec(KraussFollow(), LearnedLaneChange(lane)),
    }
    names = sorted(behaviors)

    network = generate_grid(30, 30)
    generated = generate_flow(network, interval=30.0, end=1000.0, stagger=1.0)
    flow = replace(
        generated,
        behaviors=behaviors,
        flows=tuple(
            replace(group, behavior=names[index % len(names)])
            for index, group in enumerate(generated.flows)
        ),
    )

    start = perf_counter()
    engine = Engine(network, flow)
    for _ in range(1000):
        engine.step()
        assert engine.conserved

    assert perf_counter() - start < 300
    assert engine.spawned >= 3000
    assert {vehicle.behavior for vehicle in engine.active.values()} == set(
        behaviors.values()
    )
