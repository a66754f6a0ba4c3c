"""Per-vehicle behavior specifications

A behavior is one car-following model plus one lane-change model. Each
model is a small frozen dataclass named in flow files by its kind::

    [behaviors.cautious]
    car_follow = {kind = "idm", desired_speed = 12.0}
    lane_change = {kind = "gap", hysteresis = 8.0}

    [behaviors.cloned]
    car_follow = {kind = "learned", model = "models/follow.mlpb"}
    lane_change = {kind = "none"}
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional

from embedsim.errors import FlowValidationError, ModelLoadError
from embedsim.learned.features import Surroundings, Task
from embedsim.learned.mlp import (
    EMBEDDED,
    MlpModel,
    ModelRunner,
    predict_follow_speed,
    predict_lane_choice,
)
from embedsim.learned.modelfile import load_model
from embedsim.rulebased import (
    DEFAULT_HYSTERESIS,
    DEFAULT_REAR_HEADWAY,
    IdmParams,
    idm_follow_speed,
    krauss_follow_speed,
    rule_lane_change,
)
from embedsim.vehicle import LaneChoice, Vehicle

LOGGER = logging.getLogger("embedsim.engine")


class ModelTable:
    """Learned models loaded for a simulation, and how to run them"""

    def __init__(
        self,
        models: Optional[dict[Path, MlpModel]] = None,
        runner: ModelRunner = EMBEDDED,
    ):
        self.models = models or {}
        self.runner = runner

    @classmethod
    def load(
        cls, needed: Iterable[tuple[Path, Task]], runner: ModelRunner = EMBEDDED
    ) -> "ModelTable":
        """Load every model a simulation needs

        Raises:
            ModelLoadError: if a model can't be read or is for the wrong task
        """
        models: dict[Path, MlpModel] = {}
        for path, task in needed:
            if path not in models:
                try:
                    models[path] = load_model(path)
                except (OSError, ValueError) as exception:
                    raise ModelLoadError(f"{path}: {exception}") from exception

            if models[path].task is not task:
                raise ModelLoadError(
                    f"{path} is a {models[path].task.value} model, "
                    f"used for {task.value}"
                )

        return cls(models, runner)

    def __getitem__(self, path: Path) -> MlpModel:
        return self.models[path]


class CarFollow(ABC):
    """A car-following model"""

    kind: str

    @abstractmethod
    def target_speed(
        self,
        vehicle: Vehicle,
        surroundings: Surroundings,
        *,
        clock: float,
        dt: float,
        models: ModelTable,
    ) -> float:
        """The speed the vehicle wants to have after this step"""

    @property
    def learned(self) -> bool:
        return False

    def models(self) -> list[tuple[Path, Task]]:
        """The model files this needs"""
        return []

    def serialize(self, base: Optional[Path] = None) -> dict[str, Any]:
        return {"kind": self.kind}


@dataclass(frozen=True)
class KraussFollow(CarFollow):
    kind = "krauss"

    def target_speed(
        self,
        vehicle: Vehicle,
        surroundings: Surroundings,
        *,
        clock: float,
        dt: float,
        models: ModelTable,
    ) -> float:
        return krauss_follow_speed(
            vehicle, surroundings.leader, surroundings.lane_max_speed, dt
        )


@dataclass(frozen=True)
class IdmFollow(CarFollow):
    kind = "idm"

    desired_speed: Optional[float] = None
    delta: float = 4.0

    def __post_init__(self):
        if self.desired_speed is not None and not self.desired_speed > 0:
            raise FlowValidationError(
                f"idm desired_speed must be positive: {self.desired_speed}"
            )

    def target_speed(
        self,
        vehicle: Vehicle,
        surroundings: Surroundings,
        *,
        clock: float,
        dt: float,
        models: ModelTable,
    ) -> float:
        return idm_follow_speed(
            vehicle,
            surroundings.leader,
            surroundings.lane_max_speed,
            dt,
            IdmParams(self.desired_speed, self.delta),
        )

    def serialize(self, base: Optional[Path] = None) -> dict[str, Any]:
        serialized: dict[str, Any] = {"kind": self.kind, "delta": self.delta}
        if self.desired_speed is not None:
            serialized["desired_speed"] = self.desired_speed

        return serialized


@dataclass(frozen=True)
class LearnedFollow(CarFollow):
    kind = "learned"

    model: Path

    @property
    def learned(self) -> bool:
        return True

    def models(self) -> list[tuple[Path, Task]]:
        return [(self.model, Task.FOLLOW_SPEED)]

    def target_speed(
        self,
        vehicle: Vehicle,
        surroundings: Surroundings,
        *,
        clock: float,
        dt: float,
        models: ModelTable,
    ) -> float:
        return predict_follow_speed(
            models[self.model],
            vehicle,
            surroundings,
            dt,
            clock=clock,
            runner=models.runner,
        )

    def serialize(self, base: Optional[Path] = None) -> dict[str, Any]:
        return {"kind": self.kind, "model": _relative(self.model, base)}


class LaneChange(ABC):
    """A lane-change model"""

    kind: str

    @property
    def enabled(self) -> bool:
        return True

    @property
    def learned(self) -> bool:
        return False

    @abstractmethod
    def choose(
        self,
        vehicle: Vehicle,
        surroundings: Surroundings,
        *,
        clock: float,
        dt: float,
        models: ModelTable,
    ) -> LaneChoice:
        """The lane the vehicle wants to be in"""

    def models(self) -> list[tuple[Path, Task]]:
        return []

    def serialize(self, base: Optional[Path] = None) -> dict[str, Any]:
        return {"kind": self.kind}


@dataclass(frozen=True)
class GapLaneChange(LaneChange):
    kind = "gap"

    hysteresis: float = DEFAULT_HYSTERESIS
    rear_headway: float = DEFAULT_REAR_HEADWAY

    def choose(
        self,
        vehicle: Vehicle,
        surroundings: Surroundings,
        *,
        clock: float,
        dt: float,
        models: ModelTable,
    ) -> LaneChoice:
        return rule_lane_change(
            vehicle,
            surroundings.lanes,
            hysteresis=self.hysteresis,
            rear_headway=self.rear_headway,
        )

    def serialize(self, base: Optional[Path] = None) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "hysteresis": self.hysteresis,
            "rear_headway": self.rear_headway,
        }


@dataclass(frozen=True)
class LearnedLaneChange(LaneChange):
    kind = "learned"

    model: Path

    @property
    def learned(self) -> bool:
        return True

    def models(self) -> list[tuple[Path, Task]]:
        return [(self.model, Task.LANE_CHANGE)]

    def choose(
        self,
        vehicle: Vehicle,
        surroundings: Surroundings,
        *,
        clock: float,
        dt: float,
        models: ModelTable,
    ) -> LaneChoice:
        return predict_lane_choice(
            models[self.model],
            vehicle,
            surroundings,
            clock=clock,
            dt=dt,
            runner=models.runner,
        )

    def serialize(self, base: Optional[Path] = None) -> dict[str, Any]:
        return {"kind": self.kind, "model": _relative(self.model, base)}


@dataclass(frozen=True)
class NoLaneChange(LaneChange):
    kind = "none"

    @property
    def enabled(self) -> bool:
        return False

    def choose(
        self,
        vehicle: Vehicle,
        surroundings: Surroundings,
        *,
        clock: float,
        dt: float,
        models: ModelTable,
    ) -> LaneChoice:
        return LaneChoice.STAY


CAR_FOLLOW_MODELS: dict[str, type[CarFollow]] = {
    "krauss": KraussFollow,
    "idm": IdmFollow,
    "learned": LearnedFollow,
}

LANE_CHANGE_MODELS: dict[str, type[LaneChange]] = {
    "gap": GapLaneChange,
    "learned": LearnedLaneChange,
    "none": NoLaneChange,
}


@dataclass(frozen=True)
class BehaviorSpec:
    car_follow: CarFollow = field(default_factory=KraussFollow)
    lane_change: LaneChange = field(default_factory=GapLaneChange)

    def models(self) -> list[tuple[Path, Task]]:
        return self.car_follow.models() + self.lane_change.models()

    def serialize(self, base: Optional[Path] = None) -> dict[str, Any]:
        return {
            "car_follow": self.car_follow.serialize(base),
            "lane_change": self.lane_change.serialize(base),
        }


def _relative(path: Path, base: Optional[Path]) -> str:
    if base is not None:
        try:
            return path.relative_to(base).as_posix()
        except ValueError:
            pass

    return str(path)


def _load_model_spec(
    registry: dict[str, Any],
    raw: Any,
    where: str,
    base: Optional[Path],
    defaults: dict[str, Any],
) -> Any:
    if not isinstance(raw, dict) or not isinstance(raw.get("kind"), str):
        raise FlowValidationError(f"{where}: expected a table with a kind")

    arguments = {key: value for key, value in raw.items() if key != "kind"}
    kind = raw["kind"]

    if kind not in registry:
        raise FlowValidationError(
            f"{where}: unknown kind {kind!r} (expected one of {', '.join(registry)})"
        )

    if "model" in arguments:
        if not isinstance(arguments["model"], str):
            raise FlowValidationError(f"{where}.model: expected a path")

        model = Path(arguments["model"])
        if base is not None and not model.is_absolute():
            model = base / model

        arguments["model"] = model

    if kind in defaults:
        arguments = {**defaults[kind], **arguments}

    try:
        return registry[kind](**arguments)
    except TypeError as exception:
        raise FlowValidationError(f"{where}: {exception}") from exception


def load_behavior(
    raw: dict[str, Any],
    *,
    where: str = "behavior",
    base: Optional[Path] = None,
    lane_change_defaults: Optional[dict[str, Any]] = None,
) -> BehaviorSpec:
    """Build a behavior from its flow-file table

    Model paths are relative to base. Missing entries use Krauss car
    following and the gap lane-change rule.
    """
    car_follow: CarFollow = KraussFollow()
    lane_change: LaneChange = GapLaneChange(**(lane_change_defaults or {}))

    unknown = set(raw) - {"car_follow", "lane_change"}
    if unknown:
        raise FlowValidationError(f"{where}: unknown keys {', '.join(sorted(unknown))}")

    if "car_follow" in raw:
        car_follow = _load_model_spec(
            CAR_FOLLOW_MODELS, raw["car_follow"], f"{where}.car_follow", base, {}
        )

    if "lane_change" in raw:
        lane_change = _load_model_spec(
            LANE_CHANGE_MODELS,
            raw["lane_change"],
            f"{where}.lane_change",
            base,
            {"gap": lane_change_defaults or {}},
        )

    return BehaviorSpec(car_follow, lane_change)


__all__ = (
    "BehaviorSpec",
    "CAR_FOLLOW_MODELS",
    "CarFollow",
    "GapLaneChange",
    "IdmFollow",
    "KraussFollow",
    "LANE_CHANGE_MODELS",
    "LaneChange",
    "LearnedFollow",
    "LearnedLaneChange",
    "ModelTable",
    "NoLaneChange",
    "load_behavior",
)
