import os
import socket
from contextlib import contextmanager
from multiprocessing import Process
from pathlib import Path
from time import sleep, time
from typing import Any, Callable, Iterator, Optional, Sequence

import pytest  # type: ignore

DIRECTORY = Path(__file__).parent.absolute()

ACCEPTANCE_VARIABLE = "EMBEDSIM_ACCEPTANCE"


@pytest.fixture
def acceptance():
    """A fixture that skips a test unless acceptance runs are requested"""
    if os.environ.get(ACCEPTANCE_VARIABLE) != "1":
        pytest.skip(f"acceptance test: set {ACCEPTANCE_VARIABLE}=1 to run")


@pytest.fixture
def sample_files() -> tuple[Path, Path]:
    """The shipped grid-1x1 network and its 122-vehicle flow"""
    from embedsim import SAMPLE_FLOW, SAMPLE_NETWORK

    return SAMPLE_NETWORK, SAMPLE_FLOW


@pytest.fixture
def corridor() -> Callable:
    return make_corridor


def make_corridor(
    lengths: Sequence[float] = (100.0,),
    *,
    lanes: int = 1,
    max_speed: float = 13.89,
    phases: Optional[Sequence[tuple[bool, float]]] = None,
) -> Any:
    """
    A straight line of roads r0, r1, ... joined by intersections J1, J2, ...
    where the only turn is straight through.

    phases: (green, duration) pairs for a signal controlling the end of r0
    """
    from embedsim.network.files import validate
    from embedsim.network.types import (
        Intersection,
        Lane,
        Movement,
        Phase,
        Road,
        RoadNetwork,
        SignalPlan,
        Turn,
    )

    lane_tuple = tuple(Lane(index, max_speed) for index in range(lanes))

    roads = []
    for index, length in enumerate(lengths):
        roads.append(
            Road(
                f"r{index}",
                f"J{index}" if index > 0 else None,
                f"J{index + 1}" if index < len(lengths) - 1 else None,
                float(length),
                lane_tuple,
            )
        )

    intersections = []
    for index in range(1, len(lengths)):
        signal = None
        if phases is not None and index == 1:
            signal = SignalPlan(
                tuple(
                    Phase(
                        frozenset({("r0", Movement.THROUGH)}) if green else frozenset(),
                        duration,
                    )
                    for green, duration in phases
                )
            )

        intersections.append(
            Intersection(
                f"J{index}",
                (Turn(f"r{index - 1}", Movement.THROUGH, f"r{index}"),),
                signal,
            )
        )

    network = RoadNetwork(tuple(intersections), tuple(roads))
    validate(network)

    return network


def make_flow(
    vehicles: Sequence[tuple[str, float]],
    route: Sequence[str] = ("r0",),
    *,
    behavior: Any = None,
    params: Any = None,
    lane: Optional[int] = None,
) -> Any:
    """A flow of individual vehicles (id, spawn time) on one route"""
    from embedsim.engine.flow import DEFAULT_BEHAVIOR, FlowConfig, SpawnRecord
    from embedsim.vehicle import VehicleParams

    if params is None:
        params = VehicleParams()

    behaviors = {}
    if behavior is not None:
        behaviors[DEFAULT_BEHAVIOR] = behavior

    return FlowConfig(
        tuple(
            SpawnRecord(id, spawn_time, tuple(route), params, lane=lane)
            for id, spawn_time in vehicles
        ),
        behaviors,
    )


@pytest.fixture
def flow() -> Callable:
    return make_flow


@pytest.fixture
def make_model() -> Callable:
    return random_model


def random_model(
    task: Any,
    hidden: Sequence[int] = (8,),
    *,
    seed: int = 0,
    mask: Any = None,
) -> Any:
    """An untrained model with random weights"""
    import numpy as np

    from embedsim.learned.features import FeatureMask, catalog
    from embedsim.learned.mlp import MlpModel

    rng = np.random.default_rng(seed)
    width = len(catalog(task))
    sizes = [width, *hidden, task.outputs]

    return MlpModel(
        task,
        mask if mask is not None else FeatureMask.full(task),
        tuple(rng.normal(0, 0.5, (out, into)) for into, out in zip(sizes, sizes[1:])),
        tuple(rng.normal(0, 0.1, out) for out in sizes[1:]),
        rng.normal(0, 1, width),
        rng.uniform(0.5, 2.0, width),
        {"seed": seed},
    )


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.fixture
def run_server() -> Callable:
    return _run_server


@contextmanager
def _run_server(
    follow: Optional[Path] = None, lane: Optional[Path] = None
) -> Iterator[int]:
    """Serve models in another process until the block exits

    Yields the port the server is listening on.
    """
    port = free_port()
    process = Process(target=_serve, args=(follow, lane, port))

    process.start()

    try:
        timeout = time() + 5
        while time() < timeout:
            try:
                socket.create_connection(("127.0.0.1", port), timeout=0.5).close()
                break
            except OSError:
                sleep(0.1)
        else:
            raise ValueError("server failed to come up")

        yield port
    finally:
        process.terminate()
        process.join()


def _serve(follow: Optional[Path], lane: Optional[Path], port: int):
    import asyncio

    from embedsim.bench.server import serve_models

    asyncio.run(serve_models(follow, lane, "127.0.0.1", port))
