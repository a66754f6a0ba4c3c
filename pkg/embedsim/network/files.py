"""Reading, writing, and validating network files

A network file is TOML::

    [version]
    major = 0
    minor = 1
    patch = 0

    [[intersections]]
    id = "I_0_0"
    row = 0          # optional, set by the grid generator
    col = 0

    [intersections.signal]   # optional
    offset = 0.0

    [[intersections.signal.phases]]
    duration = 30.0
    green = ["entry_0_0_S:through", "entry_0_0_S:left", ...]

    [[intersections.turns]]
    incoming = "entry_0_0_E"
    movement = "through"     # through | left | right
    outgoing = "road_0_0_E"

    [[roads]]
    id = "entry_0_0_E"
    to = "I_0_0"             # omit from/to at the network boundary
    length = 300.0
    lanes = [{max_speed = 13.89}, {max_speed = 13.89}]

Lanes are listed innermost first.
"""
import logging
import math
import tomllib
from pathlib import Path
from typing import Any, Optional

import tomli_w

from embedsim.errors import InvalidPathError, ParseError, ValidationError
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
from embedsim.version import NETWORK_VERSION, Version

LOGGER = logging.getLogger("embedsim.network")


def load_network(path: Path) -> RoadNetwork:
    """Load and validate a network file

    Args:
        path: The network file

    Returns:
        The validated network
    """
    try:
        with path.open("rb") as stream:
            raw = tomllib.load(stream)
    except tomllib.TOMLDecodeError as exception:
        raise ParseError(f"{path}: {exception}") from exception
    except OSError as exception:
        raise InvalidPathError(f"{path}: {exception}") from exception

    network = parse_network(raw, source=str(path))
    validate(network)

    LOGGER.debug(
        "loaded %s: %d intersections, %d roads",
        path,
        len(network.intersections),
        len(network.roads),
    )

    return network


def save_network(network: RoadNetwork, path: Path):
    """Write a network file"""
    contents = {"version": NETWORK_VERSION.as_dict(), **network.serialize()}

    try:
        with path.open("wb") as stream:
            tomli_w.dump(contents, stream)
    except OSError as exception:
        raise InvalidPathError(f"{path}: {exception}") from exception


def parse_network(raw: dict[str, Any], *, source: str = "network") -> RoadNetwork:
    """Build a network from the parsed contents of a network file

    This checks the shape of the file but not the references between
    roads and intersections. See :func:`validate` for that.
    """
    reader = _Reader(source)

    version = reader.table(raw, "version")
    try:
        file_version = Version.from_dict(version)
    except (KeyError, TypeError, ValueError):
        raise ParseError(f"{source}: version: expected major, minor, and patch")

    if not NETWORK_VERSION.compatible(file_version):
        raise ParseError(f"{source}: unsupported network version {file_version}")

    roads = []
    for index, raw_road in enumerate(reader.tables(raw, "roads")):
        where = f"roads[{index}]"
        lanes = tuple(
            Lane(
                lane_index,
                reader.number(raw_lane, "max_speed", f"{where}.lanes[{lane_index}]"),
            )
            for lane_index, raw_lane in enumerate(
                reader.tables(raw_road, "lanes", where)
            )
        )
        roads.append(
            Road(
                reader.string(raw_road, "id", where),
                reader.string(raw_road, "from", where, optional=True),
                reader.string(raw_road, "to", where, optional=True),
                reader.number(raw_road, "length", where),
                lanes,
            )
        )

    intersections = []
    for index, raw_intersection in enumerate(
        reader.tables(raw, "intersections", optional=True)
    ):
        where = f"intersections[{index}]"

        turns = []
        for turn_index, raw_turn in enumerate(
            reader.tables(raw_intersection, "turns", where, optional=True)
        ):
            turn_where = f"{where}.turns[{turn_index}]"
            turns.append(
                Turn(
                    reader.string(raw_turn, "incoming", turn_where),
                    reader.movement(
                        reader.string(raw_turn, "movement", turn_where),
                        f"{turn_where}.movement",
                    ),
                    reader.string(raw_turn, "outgoing", turn_where),
                )
            )

        signal = None
        if "signal" in raw_intersection:
            raw_signal = reader.table(raw_intersection, "signal", where)
            signal_where = f"{where}.signal"
            phases = []
            for phase_index, raw_phase in enumerate(
                reader.tables(raw_signal, "phases", signal_where)
            ):
                phase_where = f"{signal_where}.phases[{phase_index}]"
                green = set()
                for entry in reader.strings(raw_phase, "green", phase_where):
                    road, _, movement = entry.rpartition(":")
                    if not road:
                        raise ParseError(
                            f"{source}: {phase_where}.green: "
                            f"expected 'road:movement', got {entry!r}"
                        )

                    green.add((road, reader.movement(movement, f"{phase_where}.green")))

                phases.append(
                    Phase(
                        frozenset(green),
                        reader.number(raw_phase, "duration", phase_where),
                    )
                )

            offset = 0.0
            if "offset" in raw_signal:
                offset = reader.number(raw_signal, "offset", signal_where)

            signal = SignalPlan(tuple(phases), offset)

        grid_coord = None
        if "row" in raw_intersection or "col" in raw_intersection:
            grid_coord = (
                reader.integer(raw_intersection, "row", where),
                reader.integer(raw_intersection, "col", where),
            )

        intersections.append(
            Intersection(
                reader.string(raw_intersection, "id", where),
                tuple(turns),
                signal,
                grid_coord,
            )
        )

    return RoadNetwork(tuple(intersections), tuple(roads))


def validate(network: RoadNetwork):
    """Check the invariants of a network

    Raises:
        ValidationError: naming the first problem found
    """
    intersection_ids: set[str] = set()
    for intersection in network.intersections:
        if intersection.id in intersection_ids:
            raise ValidationError(f"duplicate intersection id: {intersection.id}")

        intersection_ids.add(intersection.id)

    road_ids: set[str] = set()
    for road in network.roads:
        if road.id in road_ids:
            raise ValidationError(f"duplicate road id: {road.id}")

        road_ids.add(road.id)

        for end in (road.origin, road.destination):
            if end is not None and end not in intersection_ids:
                raise ValidationError(
                    f"road {road.id} references unknown intersection {end}"
                )

        if not (math.isfinite(road.length) and road.length > 0):
            raise ValidationError(f"road {road.id} has nonpositive length")

        if not road.lanes:
            raise ValidationError(f"road {road.id} has no lanes")

        for lane in road.lanes:
            if not (math.isfinite(lane.max_speed) and lane.max_speed > 0):
                raise ValidationError(
                    f"road {road.id} lane {lane.index} has invalid max speed"
                )

    for intersection in network.intersections:
        seen: set[tuple[str, Movement]] = set()
        for turn in intersection.turns:
            for road_id in (turn.incoming, turn.outgoing):
                if road_id not in road_ids:
                    raise ValidationError(
                        f"intersection {intersection.id} references "
                        f"unknown road {road_id}"
                    )

            if network.road(turn.incoming).destination != intersection.id:
                raise ValidationError(
                    f"intersection {intersection.id}: road {turn.incoming} "
                    "doesn't end here"
                )

            if network.road(turn.outgoing).origin != intersection.id:
                raise ValidationError(
                    f"intersection {intersection.id}: road {turn.outgoing} "
                    "doesn't start here"
                )

            key = (turn.incoming, turn.movement)
            if key in seen:
                raise ValidationError(
                    f"intersection {intersection.id}: {turn.incoming} has two "
                    f"{turn.movement.value} turns"
                )

            seen.add(key)

        if intersection.signal is not None:
            if not intersection.signal.phases:
                raise ValidationError(f"signal at {intersection.id} has no phases")

            for phase in intersection.signal.phases:
                if not (math.isfinite(phase.duration) and phase.duration > 0):
                    raise ValidationError(
                        f"signal at {intersection.id} has a nonpositive phase"
                    )

                for road_id, _ in phase.green:
                    if (
                        road_id not in road_ids
                        or network.road(road_id).destination != intersection.id
                    ):
                        raise ValidationError(
                            f"signal at {intersection.id} greens road {road_id} "
                            "which doesn't end there"
                        )

            if intersection.signal.offset < 0:
                raise ValidationError(
                    f"signal at {intersection.id} has negative offset"
                )


class _Reader:
    """Typed access to parsed TOML with errors that say where they happened"""

    def __init__(self, source: str):
        self.source = source

    def _get(self, raw: dict, key: str, where: Optional[str], optional: bool):
        if key not in raw:
            if optional:
                return None

            raise ParseError(f"{self.source}: {self._path(where, key)}: missing")

        return raw[key]

    def _path(self, where: Optional[str], key: str) -> str:
        return f"{where}.{key}" if where else key

    def string(
        self, raw: dict, key: str, where: Optional[str] = None, optional: bool = False
    ) -> Any:
        value = self._get(raw, key, where, optional)

        if value is not None and not isinstance(value, str):
            raise ParseError(
                f"{self.source}: {self._path(where, key)}: expected a string"
            )

        return value

    def strings(self, raw: dict, key: str, where: Optional[str] = None) -> list[str]:
        value = self._get(raw, key, where, False)

        if not isinstance(value, list) or not all(
            isinstance(item, str) for item in value
        ):
            raise ParseError(
                f"{self.source}: {self._path(where, key)}: expected a list of strings"
            )

        return value

    def number(self, raw: dict, key: str, where: Optional[str] = None) -> float:
        value = self._get(raw, key, where, False)

        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ParseError(
                f"{self.source}: {self._path(where, key)}: expected a number"
            )

        return float(value)

    def integer(self, raw: dict, key: str, where: Optional[str] = None) -> int:
        value = self._get(raw, key, where, False)

        if isinstance(value, bool) or not isinstance(value, int):
            raise ParseError(
                f"{self.source}: {self._path(where, key)}: expected an integer"
            )

        return value

    def table(self, raw: dict, key: str, where: Optional[str] = None) -> dict:
        value = self._get(raw, key, where, False)

        if not isinstance(value, dict):
            raise ParseError(
                f"{self.source}: {self._path(where, key)}: expected a table"
            )

        return value

    def tables(
        self, raw: dict, key: str, where: Optional[str] = None, optional: bool = False
    ) -> list[dict]:
        value = self._get(raw, key, where, optional)

        if value is None:
            return []

        if not isinstance(value, list) or not all(
            isinstance(item, dict) for item in value
        ):
            raise ParseError(
                f"{self.source}: {self._path(where, key)}: expected a list of tables"
            )

        return value

    def movement(self, raw: str, where: str) -> Movement:
        try:
            return Movement(raw)
        except ValueError:
            raise ParseError(f"{self.source}: {where}: unknown movement {raw!r}")


__all__ = ("load_network", "parse_network", "save_network", "validate")
