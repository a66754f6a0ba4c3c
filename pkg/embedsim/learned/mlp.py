"""A small multilayer perceptron run inside the simulator"""
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Optional, Protocol, Sequence

import numpy as np

from embedsim.errors import DimensionMismatch, InputValidationError, ModelTaskMismatch
from embedsim.learned.features import (
    FeatureMask,
    Surroundings,
    Task,
    catalog,
    extract_features,
)
from embedsim.vehicle import LaneChoice, Vehicle, speed_limit


@dataclass(frozen=True, eq=False)
class MlpModel:
    """A trained policy

    Weight matrices have shape (outputs, inputs). Hidden layers use
    ReLU and the last layer is affine. Inputs are masked and then
    normalized with the baked-in mean and std.
    """

    task: Task
    mask: FeatureMask
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    mean: np.ndarray
    std: np.ndarray
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.mask.task is not self.task:
            raise ModelTaskMismatch(
                f"{self.task.value} model with a {self.mask.task.value} mask"
            )

        if not self.weights or len(self.weights) != len(self.biases):
            raise DimensionMismatch("a model needs one bias vector per weight matrix")

        width = len(catalog(self.task))
        for index, (weight, bias) in enumerate(zip(self.weights, self.biases)):
            if weight.ndim != 2 or weight.shape[1] != width:
                raise DimensionMismatch(
                    f"layer {index}: expected {width} inputs, got shape {weight.shape}"
                )

            if bias.shape != (weight.shape[0],):
                raise DimensionMismatch(
                    f"layer {index}: bias shape {bias.shape} doesn't match "
                    f"{weight.shape[0]} outputs"
                )

            width = weight.shape[0]

        if width != self.task.outputs:
            raise DimensionMismatch(
                f"{self.task.value} models have {self.task.outputs} outputs, "
                f"not {width}"
            )

        features = len(catalog(self.task))
        if self.mean.shape != (features,) or self.std.shape != (features,):
            raise DimensionMismatch("normalization stats don't match the catalog")

        if not np.all(self.std > 0):
            raise InputValidationError("normalization std must be positive")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [weight.shape[0] for weight in self.weights]

    @cached_property
    def folded(self) -> tuple[tuple[np.ndarray, ...], tuple[np.ndarray, ...]]:
        """Weights and biases with the mask and normalization in the first layer

        W·((m·x - mean) / std) + b is (W·m / std)·x + (b - W·(mean / std)),
        so masked columns are zero and inputs are used as they come.
        """
        first, *rest = self.weights
        scale = np.where(self.mask.flags, 1.0 / self.std, 0.0)

        weights = (np.ascontiguousarray(first * scale), *rest)
        biases = (self.biases[0] - first @ (self.mean / self.std), *self.biases[1:])

        return weights, biases


def mlp_forward(model: MlpModel, features: np.ndarray) -> np.ndarray:
    """Evaluate a model on one feature vector or a batch of row vectors

    Returns:
        The raw outputs: shape (outputs,) or (rows, outputs)
    """
    values = np.asarray(features, dtype=np.float64)
    width = len(model.mask.flags)
    if values.shape[-1] != width:
        raise DimensionMismatch(
            f"{model.task.value} expects {width} features, got {values.shape[-1]}"
        )

    weights, biases = model.folded
    last = len(weights) - 1

    if values.ndim == 1:
        for index, (weight, bias) in enumerate(zip(weights, biases)):
            values = weight @ values
            values += bias
            if index < last:
                np.maximum(values, 0.0, out=values)

        return values

    for index, (weight, bias) in enumerate(zip(weights, biases)):
        values = values @ weight.T + bias
        if index < last:
            values = np.maximum(values, 0.0)

    return values


def choose_lane(
    logits: Sequence[float], left_exists: bool, right_exists: bool
) -> LaneChoice:
    """Turn lane-change logits into a choice

    Ties go to Stay, then Left. A side without a lane means Stay.
    """
    best = max(logits)

    choice = LaneChoice.STAY
    for candidate in (LaneChoice.STAY, LaneChoice.LEFT, LaneChoice.RIGHT):
        if logits[candidate.value] == best:
            choice = candidate
            break

    if (choice is LaneChoice.LEFT and not left_exists) or (
        choice is LaneChoice.RIGHT and not right_exists
    ):
        return LaneChoice.STAY

    return choice


class ModelRunner(Protocol):
    """Something that evaluates a model on a single feature vector"""

    def follow_speed(self, model: MlpModel, features: np.ndarray) -> float:
        ...

    def lane_logits(self, model: MlpModel, features: np.ndarray) -> np.ndarray:
        ...


class EmbeddedRunner:
    """Evaluates models in-process"""

    def follow_speed(self, model: MlpModel, features: np.ndarray) -> float:
        return float(mlp_forward(model, features)[0])

    def lane_logits(self, model: MlpModel, features: np.ndarray) -> np.ndarray:
        return mlp_forward(model, features)


EMBEDDED = EmbeddedRunner()


def predict_follow_speed(
    model: MlpModel,
    vehicle: Vehicle,
    surroundings: Surroundings,
    dt: float,
    *,
    clock: float = 0.0,
    runner: Optional[ModelRunner] = None,
) -> float:
    """The learned target speed, clamped to what the vehicle and lane allow

    Raises:
        ModelTaskMismatch: if model isn't a followSpeed model
    """
    if model.task is not Task.FOLLOW_SPEED:
        raise ModelTaskMismatch(f"expected a followSpeed model, got {model.task.value}")

    features = extract_features(Task.FOLLOW_SPEED, vehicle, surroundings, clock, dt)
    raw = (runner or EMBEDDED).follow_speed(model, features)

    return min(max(raw, 0.0), speed_limit(vehicle, surroundings.lane_max_speed))


def predict_lane_choice(
    model: MlpModel,
    vehicle: Vehicle,
    surroundings: Surroundings,
    *,
    clock: float = 0.0,
    dt: float = 1.0,
    runner: Optional[ModelRunner] = None,
) -> LaneChoice:
    """The learned lane choice, never a lane that doesn't exist

    Raises:
        ModelTaskMismatch: if model isn't a laneChange model
    """
    if model.task is not Task.LANE_CHANGE:
        raise ModelTaskMismatch(f"expected a laneChange model, got {model.task.value}")

    features = extract_features(Task.LANE_CHANGE, vehicle, surroundings, clock, dt)
    logits = (runner or EMBEDDED).lane_logits(model, features)

    return choose_lane(
        [float(logit) for logit in logits],
        surroundings.lanes.left is not None,
        surroundings.lanes.right is not None,
    )


__all__ = (
    "EMBEDDED",
    "EmbeddedRunner",
    "MlpModel",
    "ModelRunner",
    "choose_lane",
    "mlp_forward",
    "predict_follow_speed",
    "predict_lane_choice",
)
