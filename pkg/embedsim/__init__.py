"""A deterministic traffic simulator with embedded learned behaviors

.. todo::
    Support per-lane movement restrictions (turn lanes)
"""
import logging
from pathlib import Path
from typing import Optional

from embedsim.configuration import Configuration
from embedsim.engine.behavior import BehaviorSpec
from embedsim.engine.flow import FlowConfig
from embedsim.engine.flow import load_flow as _load_flow
from embedsim.engine.simulation import Engine
from embedsim.learned.mlp import EMBEDDED, ModelRunner
from embedsim.network.files import load_network
from embedsim.network.types import RoadNetwork
from embedsim.version import VERSION, __version__  # noqa: F401

DATA = Path(__file__).parent / "data"
SAMPLE_NETWORK = DATA / "grid-1x1.toml"
SAMPLE_FLOW = DATA / "flow-1x1.toml"

LOGGER = logging.getLogger("embedsim")


def load_flow(path: Path, configuration: Optional[Configuration] = None) -> FlowConfig:
    """Load a flow file

    Args:
        path: The flow file
        configuration: Supplies lane-change defaults for gap models that
            don't set their own
    """
    if configuration is None:
        configuration = Configuration()

    settings = configuration.lane_change

    return _load_flow(
        path,
        lane_change_defaults={
            "hysteresis": settings.hysteresis,
            "rear_headway": settings.rear_headway,
        },
    )


def initialize(
    network: RoadNetwork | Path,
    flow: FlowConfig | Path,
    /,
    *,
    configuration: Optional[Configuration] = None,
    behavior: Optional[BehaviorSpec] = None,
    runner: ModelRunner = EMBEDDED,
) -> Engine:
    """Build an engine ready to step

    Args:
        network: A network, or the file to load it from
        flow: A flow, or the file to load it from
        configuration: Supplies dt, the collision tolerance, and the seed
        behavior: If given, every vehicle uses this behavior
        runner: How learned models are evaluated

    Returns:
        The engine, at step 0
    """
    if configuration is None:
        configuration = Configuration()

    if isinstance(network, Path):
        network = load_network(network)

    if isinstance(flow, Path):
        flow = load_flow(flow, configuration)

    settings = configuration.simulation

    return Engine(
        network,
        flow,
        dt=settings.dt,
        collision_tolerance=settings.collision_tolerance,
        behavior=behavior,
        runner=runner,
        seed=settings.seed,
    )


__all__ = (
    "DATA",
    "SAMPLE_FLOW",
    "SAMPLE_NETWORK",
    "__version__",
    "initialize",
    "load_flow",
    "load_network",
)
