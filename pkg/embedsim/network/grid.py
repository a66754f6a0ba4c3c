"""A generator for rectangular grids of intersections

Intersections are named ``I_{row}_{col}`` with rows growing southward
and columns growing eastward. The road leaving an intersection heading
in compass direction H is ``road_{row}_{col}_{H}`` (its far end is the
boundary on the edge of the grid) and the road entering an edge
intersection from outside heading H is ``entry_{row}_{col}_{H}``.

Traffic keeps right, so a left turn is a counter-clockwise change of
heading.
"""
from typing import Optional, Sequence

from embedsim.errors import InputValidationError, RouteBroken
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

HEADINGS = {
    "N": (-1, 0),
    "E": (0, 1),
    "S": (1, 0),
    "W": (0, -1),
}

LEFT_OF = {"E": "N", "N": "W", "W": "S", "S": "E"}
RIGHT_OF = {"E": "S", "S": "W", "W": "N", "N": "E"}

DEFAULT_BLOCK_LENGTH = 300.0
DEFAULT_LANES = 3
DEFAULT_MAX_SPEED = 13.89
DEFAULT_PHASE_DURATION = 30.0


def intersection_id(row: int, col: int) -> str:
    return f"I_{row}_{col}"


def generate_grid(
    rows: int,
    cols: int,
    block_length: float = DEFAULT_BLOCK_LENGTH,
    lanes_per_road: int = DEFAULT_LANES,
    max_speed: float = DEFAULT_MAX_SPEED,
    signalized: bool = True,
    *,
    phase_duration: float = DEFAULT_PHASE_DURATION,
) -> RoadNetwork:
    """Create a rows x cols grid of intersections

    Every pair of adjacent intersections is joined by one road in each
    direction, and every edge of the grid gets an entry and an exit road
    per boundary side. Boundary roads are block_length long too.

    Args:
        rows: Intersections north to south
        cols: Intersections west to east
        block_length: Length of every road, in meters
        lanes_per_road: Lanes on every road
        max_speed: Speed limit of every lane, in m/s
        signalized: Give every intersection a two-phase signal (north-south
            approaches green, then east-west approaches green)
        phase_duration: Length of each signal phase, in seconds

    Returns:
        The validated network
    """
    for name, value in (
        ("rows", rows),
        ("cols", cols),
        ("lanes_per_road", lanes_per_road),
    ):
        if value < 1:
            raise InputValidationError(f"{name} must be at least 1, got {value}")

    for name, number in (
        ("block_length", block_length),
        ("max_speed", max_speed),
        ("phase_duration", phase_duration),
    ):
        if not number > 0:
            raise InputValidationError(f"{name} must be positive, got {number}")

    def inside(row: int, col: int) -> bool:
        return 0 <= row < rows and 0 <= col < cols

    lanes = tuple(Lane(index, float(max_speed)) for index in range(lanes_per_road))

    roads: list[Road] = []
    intersections: list[Intersection] = []

    for row in range(rows):
        for col in range(cols):
            here = intersection_id(row, col)

            # incoming road for each travel heading
            incoming: dict[str, str] = {}
            for heading, (d_row, d_col) in HEADINGS.items():
                up_row, up_col = row - d_row, col - d_col
                if inside(up_row, up_col):
                    incoming[heading] = f"road_{up_row}_{up_col}_{heading}"
                else:
                    entry = f"entry_{row}_{col}_{heading}"
                    incoming[heading] = entry
                    roads.append(
                        Road(entry, None, here, float(block_length), lanes)
                    )

            for heading, (d_row, d_col) in HEADINGS.items():
                down_row, down_col = row + d_row, col + d_col
                destination: Optional[str] = None
                if inside(down_row, down_col):
                    destination = intersection_id(down_row, down_col)

                roads.append(
                    Road(
                        f"road_{row}_{col}_{heading}",
                        here,
                        destination,
                        float(block_length),
                        lanes,
                    )
                )

            turns = []
            for heading, road in incoming.items():
                turns.append(
                    Turn(road, Movement.THROUGH, f"road_{row}_{col}_{heading}")
                )
                turns.append(
                    Turn(road, Movement.LEFT, f"road_{row}_{col}_{LEFT_OF[heading]}")
                )
                turns.append(
                    Turn(road, Movement.RIGHT, f"road_{row}_{col}_{RIGHT_OF[heading]}")
                )

            signal = None
            if signalized:
                signal = SignalPlan(
                    (
                        Phase(
                            frozenset(
                                (incoming[heading], movement)
                                for heading in ("N", "S")
                                for movement in Movement
                            ),
                            float(phase_duration),
                        ),
                        Phase(
                            frozenset(
                                (incoming[heading], movement)
                                for heading in ("E", "W")
                                for movement in Movement
                            ),
                            float(phase_duration),
                        ),
                    )
                )

            intersections.append(Intersection(here, tuple(turns), signal, (row, col)))

    network = RoadNetwork(tuple(intersections), tuple(roads))
    validate(network)

    return network


def successor_road(
    network: RoadNetwork, road: str, movement: Movement
) -> Optional[str]:
    """The road a movement leads to, or None at the network boundary

    Raises:
        UnknownRoad: if road isn't part of the network
    """
    return network.successor(road, movement)


def route_from(
    network: RoadNetwork, entry: str, movements: Sequence[Movement] = ()
) -> list[str]:
    """Follow the turn relation from a road until the network boundary

    Args:
        network: The network to route on
        entry: The first road of the route
        movements: The movement to make at each successive intersection.
            Once these run out, vehicles go straight through.

    Returns:
        The road ids of the route, starting with entry
    """
    route = [entry]
    limit = len(network.roads)

    while len(route) <= limit:
        index = len(route) - 1
        movement = movements[index] if index < len(movements) else Movement.THROUGH
        following = network.successor(route[-1], movement)

        if following is None:
            if network.road(route[-1]).destination is not None:
                raise RouteBroken(
                    f"no {movement.value} movement at the end of {route[-1]}"
                )

            return route

        route.append(following)

    raise RouteBroken(f"route from {entry} never reaches the boundary")


__all__ = ("generate_grid", "intersection_id", "route_from", "successor_road")
