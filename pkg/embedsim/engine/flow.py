"""Flow files: which vehicles enter the network, when, and how they drive

A flow file is TOML::

    [version]
    major = 0
    minor = 1
    patch = 0

    [vehicle_defaults]          # optional, overrides VehicleParams defaults
    max_speed = 16.67

    [behaviors.default]         # see embedsim.engine.behavior
    car_follow = {kind = "krauss"}
    lane_change = {kind = "gap"}

    [[vehicles]]                # individual vehicles
    id = "car_0"
    spawn_time = 0.0
    route = ["entry_0_0_E", "road_0_0_E"]
    behavior = "default"        # optional
    lane = 1                    # optional, otherwise the first lane with room
    params = {length = 4.5}     # optional

    [[flows]]                   # a vehicle every interval seconds
    id = "flow_0"               # vehicles are flow_0_0, flow_0_1, ...
    route = ["entry_0_0_E", "road_0_0_E"]
    start = 0.0
    end = 300.0
    interval = 30.0
    behavior = "default"
    params = {}

A behavior named "default" is used by vehicles that don't name one; if
the file doesn't define it, it is Krauss car following with the gap
lane-change rule.
"""
import logging
import math
import tomllib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Sequence

import tomli_w

from embedsim.errors import (
    FlowValidationError,
    InputValidationError,
    InvalidPathError,
    ParseError,
)
from embedsim.engine.behavior import BehaviorSpec, load_behavior
from embedsim.network.grid import route_from
from embedsim.network.types import Movement, RoadNetwork
from embedsim.version import FLOW_VERSION, Version
from embedsim.vehicle import VehicleParams

LOGGER = logging.getLogger("embedsim.flow")

DEFAULT_BEHAVIOR = "default"

PARAM_NAMES = tuple(VehicleParams().serialize())


@dataclass(frozen=True)
class SpawnRecord:
    """One vehicle waiting to enter the network"""

    id: str
    spawn_time: float
    route: tuple[str, ...]
    params: VehicleParams = VehicleParams()
    behavior: str = DEFAULT_BEHAVIOR
    lane: Optional[int] = None

    def serialize(self, defaults: VehicleParams) -> dict[str, Any]:
        record: dict[str, Any] = {
            "id": self.id,
            "spawn_time": self.spawn_time,
            "route": list(self.route),
            "behavior": self.behavior,
        }

        if self.lane is not None:
            record["lane"] = self.lane

        params = _param_overrides(self.params, defaults)
        if params:
            record["params"] = params

        return record


@dataclass(frozen=True)
class FlowGroup:
    """Vehicles entering on one route at a fixed interval

    A vehicle enters at start, start + interval, ... up to and including end.
    """

    id: str
    route: tuple[str, ...]
    start: float
    end: float
    interval: float
    params: VehicleParams = VehicleParams()
    behavior: str = DEFAULT_BEHAVIOR
    lane: Optional[int] = None

    def expand(self) -> list[SpawnRecord]:
        records = []
        index = 0
        while True:
            time = self.start + index * self.interval
            if time > self.end:
                break

            records.append(
                SpawnRecord(
                    f"{self.id}_{index}",
                    time,
                    self.route,
                    self.params,
                    self.behavior,
                    self.lane,
                )
            )
            index += 1

        return records

    def serialize(self, defaults: VehicleParams) -> dict[str, Any]:
        flow: dict[str, Any] = {
            "id": self.id,
            "route": list(self.route),
            "start": self.start,
            "end": self.end,
            "interval": self.interval,
            "behavior": self.behavior,
        }

        if self.lane is not None:
            flow["lane"] = self.lane

        params = _param_overrides(self.params, defaults)
        if params:
            flow["params"] = params

        return flow


@dataclass(frozen=True)
class FlowConfig:
    vehicles: tuple[SpawnRecord, ...] = ()
    behaviors: dict[str, BehaviorSpec] = field(default_factory=dict)
    flows: tuple[FlowGroup, ...] = ()
    vehicle_defaults: VehicleParams = VehicleParams()

    def behavior(self, name: str) -> BehaviorSpec:
        if name in self.behaviors:
            return self.behaviors[name]

        if name == DEFAULT_BEHAVIOR:
            return BehaviorSpec()

        raise FlowValidationError(f"unknown behavior {name!r}")

    def spawn_records(self) -> list[SpawnRecord]:
        """Every vehicle, in spawn order"""
        records = list(self.vehicles)
        for flow in self.flows:
            records.extend(flow.expand())

        return sorted(records, key=lambda record: (record.spawn_time, record.id))

    def serialize(self, base: Optional[Path] = None) -> dict[str, Any]:
        contents: dict[str, Any] = {}

        defaults = self.vehicle_defaults.serialize()
        if defaults != VehicleParams().serialize():
            contents["vehicle_defaults"] = defaults

        if self.behaviors:
            contents["behaviors"] = {
                name: spec.serialize(base) for name, spec in self.behaviors.items()
            }

        if self.vehicles:
            contents["vehicles"] = [
                vehicle.serialize(self.vehicle_defaults) for vehicle in self.vehicles
            ]

        if self.flows:
            contents["flows"] = [
                flow.serialize(self.vehicle_defaults) for flow in self.flows
            ]

        return contents


def _param_overrides(params: VehicleParams, defaults: VehicleParams) -> dict:
    base = defaults.serialize()
    return {
        name: value for name, value in params.serialize().items() if value != base[name]
    }


def _params(raw: Any, where: str, defaults: VehicleParams) -> VehicleParams:
    if raw is None:
        return defaults

    if not isinstance(raw, dict):
        raise FlowValidationError(f"{where}: expected a table")

    unknown = set(raw) - set(PARAM_NAMES)
    if unknown:
        raise FlowValidationError(
            f"{where}: unknown vehicle parameters {', '.join(sorted(unknown))}"
        )

    for name, value in raw.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise FlowValidationError(f"{where}.{name}: expected a number")

    try:
        return replace(defaults, **{name: float(value) for name, value in raw.items()})
    except InputValidationError as exception:
        raise FlowValidationError(f"{where}: {exception}") from exception


def _number(raw: dict, key: str, where: str, default: Optional[float] = None) -> float:
    if key not in raw:
        if default is not None:
            return default

        raise FlowValidationError(f"{where}.{key}: missing")

    value = raw[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise FlowValidationError(f"{where}.{key}: expected a number")

    return float(value)


def _string(raw: dict, key: str, where: str, default: Optional[str] = None) -> str:
    value = raw.get(key, default)
    if not isinstance(value, str):
        raise FlowValidationError(f"{where}.{key}: expected a string")

    return value


def _route(raw: dict, where: str) -> tuple[str, ...]:
    route = raw.get("route")
    if not isinstance(route, list) or not all(isinstance(road, str) for road in route):
        raise FlowValidationError(f"{where}.route: expected a list of road ids")

    return tuple(route)


def _lane(raw: dict, where: str) -> Optional[int]:
    lane = raw.get("lane")
    if lane is not None and (isinstance(lane, bool) or not isinstance(lane, int)):
        raise FlowValidationError(f"{where}.lane: expected an integer")

    return lane


def parse_flow(
    raw: dict[str, Any],
    *,
    base: Optional[Path] = None,
    source: str = "flow",
    lane_change_defaults: Optional[dict[str, Any]] = None,
) -> FlowConfig:
    """Build a flow from the parsed contents of a flow file

    Args:
        raw: The parsed file
        base: The directory model paths are relative to
        source: Where the flow came from, for error messages
        lane_change_defaults: Parameters for gap lane-change models that
            don't set their own
    """
    if not isinstance(raw.get("version"), dict):
        raise ParseError(f"{source}: version: missing")

    try:
        version = Version.from_dict(raw["version"])
    except (KeyError, TypeError, ValueError):
        raise ParseError(f"{source}: version: expected major, minor, and patch")

    if not FLOW_VERSION.compatible(version):
        raise ParseError(f"{source}: unsupported flow version {version}")

    defaults = _params(raw.get("vehicle_defaults"), "vehicle_defaults", VehicleParams())

    raw_behaviors = raw.get("behaviors", {})
    if not isinstance(raw_behaviors, dict):
        raise FlowValidationError(f"{source}: behaviors: expected a table")

    behaviors = {}
    for name, raw_behavior in raw_behaviors.items():
        if not isinstance(raw_behavior, dict):
            raise FlowValidationError(f"{source}: behaviors.{name}: expected a table")

        behaviors[name] = load_behavior(
            raw_behavior,
            where=f"behaviors.{name}",
            base=base,
            lane_change_defaults=lane_change_defaults,
        )

    vehicles = []
    for index, raw_vehicle in enumerate(raw.get("vehicles", [])):
        where = f"vehicles[{index}]"
        if not isinstance(raw_vehicle, dict):
            raise FlowValidationError(f"{where}: expected a table")

        vehicles.append(
            SpawnRecord(
                _string(raw_vehicle, "id", where),
                _number(raw_vehicle, "spawn_time", where),
                _route(raw_vehicle, where),
                _params(raw_vehicle.get("params"), f"{where}.params", defaults),
                _string(raw_vehicle, "behavior", where, DEFAULT_BEHAVIOR),
                _lane(raw_vehicle, where),
            )
        )

    flows = []
    for index, raw_flow in enumerate(raw.get("flows", [])):
        where = f"flows[{index}]"
        if not isinstance(raw_flow, dict):
            raise FlowValidationError(f"{where}: expected a table")

        flows.append(
            FlowGroup(
                _string(raw_flow, "id", where),
                _route(raw_flow, where),
                _number(raw_flow, "start", where, 0.0),
                _number(raw_flow, "end", where),
                _number(raw_flow, "interval", where),
                _params(raw_flow.get("params"), f"{where}.params", defaults),
                _string(raw_flow, "behavior", where, DEFAULT_BEHAVIOR),
                _lane(raw_flow, where),
            )
        )

    return FlowConfig(tuple(vehicles), behaviors, tuple(flows), defaults)


def validate_flow(flow: FlowConfig, network: RoadNetwork):
    """Check a flow against the network it will run on

    Raises:
        FlowValidationError: naming the first problem found
    """
    for group in flow.flows:
        if not (math.isfinite(group.interval) and group.interval > 0):
            raise FlowValidationError(f"flow {group.id}: interval must be positive")

        if not (math.isfinite(group.start) and group.start >= 0):
            raise FlowValidationError(f"flow {group.id}: start must be nonnegative")

        if not (math.isfinite(group.end) and group.end >= group.start):
            raise FlowValidationError(f"flow {group.id}: end must not precede start")

    seen: set[str] = set()
    for record in flow.spawn_records():
        if record.id in seen:
            raise FlowValidationError(f"duplicate vehicle id: {record.id}")

        seen.add(record.id)

        if not (math.isfinite(record.spawn_time) and record.spawn_time >= 0):
            raise FlowValidationError(
                f"vehicle {record.id}: spawn time must be nonnegative"
            )

        if not record.route:
            raise FlowValidationError(f"vehicle {record.id}: empty route")

        for road in record.route:
            if not network.has_road(road):
                raise FlowValidationError(
                    f"vehicle {record.id}: unknown road {road}"
                )

        for road, following in zip(record.route, record.route[1:]):
            if network.movement_between(road, following) is None:
                raise FlowValidationError(
                    f"vehicle {record.id}: {following} doesn't follow {road}"
                )

        if record.lane is not None and not (
            0 <= record.lane < len(network.road(record.route[0]).lanes)
        ):
            raise FlowValidationError(
                f"vehicle {record.id}: {record.route[0]} has no lane {record.lane}"
            )

        flow.behavior(record.behavior)


def load_flow(
    path: Path, *, lane_change_defaults: Optional[dict[str, Any]] = None
) -> FlowConfig:
    """Load a flow file. Model paths are relative to the file's directory"""
    try:
        with path.open("rb") as stream:
            raw = tomllib.load(stream)
    except tomllib.TOMLDecodeError as exception:
        raise ParseError(f"{path}: {exception}") from exception
    except OSError as exception:
        raise InvalidPathError(f"{path}: {exception}") from exception

    flow = parse_flow(
        raw,
        base=path.parent,
        source=str(path),
        lane_change_defaults=lane_change_defaults,
    )

    LOGGER.debug(
        "loaded %s: %d vehicles, %d flows, %d behaviors",
        path,
        len(flow.vehicles),
        len(flow.flows),
        len(flow.behaviors),
    )

    return flow


def save_flow(flow: FlowConfig, path: Path):
    """Write a flow file. Model paths are written relative to its directory"""
    contents = {"version": FLOW_VERSION.as_dict(), **flow.serialize(path.parent)}

    try:
        with path.open("wb") as stream:
            tomli_w.dump(contents, stream)
    except OSError as exception:
        raise InvalidPathError(f"{path}: {exception}") from exception


def generate_flow(
    network: RoadNetwork,
    *,
    interval: float = 30.0,
    end: float = 300.0,
    stagger: float = 2.0,
    movements: Sequence[Movement] = (Movement.THROUGH, Movement.LEFT, Movement.RIGHT),
    params: VehicleParams = VehicleParams(),
    behaviors: Optional[dict[str, BehaviorSpec]] = None,
) -> FlowConfig:
    """A flow per entry road and movement at the first intersection

    Flows are numbered in order of entry road id and then movement, and
    flow i starts at i * stagger seconds.
    """
    if not interval > 0:
        raise InputValidationError(f"interval must be positive: {interval}")

    if stagger < 0:
        raise InputValidationError(f"stagger must be nonnegative: {stagger}")

    flows = []
    for entry in sorted(road.id for road in network.entry_roads):
        for movement in movements:
            index = len(flows)
            start = index * stagger
            if start > end:
                break

            flows.append(
                FlowGroup(
                    f"flow_{index}",
                    tuple(route_from(network, entry, [movement])),
                    start,
                    end,
                    interval,
                    params,
                )
            )

    return FlowConfig((), dict(behaviors or {}), tuple(flows), params)


__all__ = (
    "DEFAULT_BEHAVIOR",
    "FlowConfig",
    "FlowGroup",
    "SpawnRecord",
    "generate_flow",
    "load_flow",
    "parse_flow",
    "save_flow",
    "validate_flow",
)
