"""The static road network: types, files, and the grid generator"""
from embedsim.network.files import load_network, save_network, validate
from embedsim.network.grid import generate_grid, route_from, successor_road
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

__all__ = (
    "Intersection",
    "Lane",
    "Movement",
    "Phase",
    "Road",
    "RoadNetwork",
    "SignalPlan",
    "Turn",
    "generate_grid",
    "load_network",
    "route_from",
    "save_network",
    "successor_road",
    "validate",
)
