"""Behavior cloning: datasets and the MLP trainer"""
import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from embedsim.errors import (
    DimensionMismatch,
    EmptyDataset,
    InputValidationError,
    InvalidPathError,
    ModelTaskMismatch,
    ParseError,
)
from embedsim.learned.features import FeatureMask, Task, apply_mask, catalog
from embedsim.learned.mlp import MlpModel
from embedsim.version import FEATURE_CATALOG_VERSION

LOGGER = logging.getLogger("embedsim.training")

DEFAULT_HIDDEN = (64, 64)

OPTIMIZERS = ("sgd", "adam")

ADAM_BETAS = (0.9, 0.999)
ADAM_EPSILON = 1e-8

LABEL_COLUMN = "label"


def default_architecture(task: Task) -> list[int]:
    return [len(catalog(task)), *DEFAULT_HIDDEN, task.outputs]


@dataclass(frozen=True, eq=False)
class BcDataset:
    """(state, action) pairs logged from a teacher

    features has shape (rows, catalog size). labels are target speeds
    for followSpeed and lane choice indices (0 left, 1 stay, 2 right)
    for laneChange.
    """

    task: Task
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        width = len(catalog(self.task))

        if self.features.ndim != 2 or self.features.shape[1] != width:
            raise DimensionMismatch(
                f"{self.task.value} rows need {width} features, "
                f"got shape {self.features.shape}"
            )

        if self.labels.shape != (self.features.shape[0],):
            raise DimensionMismatch("one label is needed per row")

        if self.task is Task.LANE_CHANGE and not np.all(
            np.isin(self.labels, (0, 1, 2))
        ):
            raise InputValidationError("lane labels must be 0, 1, or 2")

    def __len__(self) -> int:
        return self.features.shape[0]

    @classmethod
    def empty(cls, task: Task) -> "BcDataset":
        return cls(
            task, np.zeros((0, len(catalog(task)))), np.zeros(0, dtype=np.float64)
        )


def write_dataset(dataset: BcDataset, path: Path):
    """Save a dataset as CSV with a header of feature names"""
    lane = dataset.task is Task.LANE_CHANGE

    try:
        with path.open("w", newline="") as stream:
            writer = csv.writer(stream)
            writer.writerow([*catalog(dataset.task), LABEL_COLUMN])
            for row, label in zip(dataset.features, dataset.labels):
                writer.writerow(
                    [repr(float(value)) for value in row]
                    + [str(int(label)) if lane else repr(float(label))]
                )
    except OSError as exception:
        raise InvalidPathError(f"{path}: {exception}") from exception


def read_dataset(path: Path) -> BcDataset:
    """Load a dataset written by :func:`write_dataset`

    The task is recognized from the header.
    """
    try:
        with path.open(newline="") as stream:
            rows = list(csv.reader(stream))
    except OSError as exception:
        raise InvalidPathError(f"{path}: {exception}") from exception

    if not rows:
        raise ParseError(f"{path}: no header")

    header = tuple(rows[0])
    for task in Task:
        if header == (*catalog(task), LABEL_COLUMN):
            break
    else:
        raise ParseError(f"{path}: header doesn't match any feature catalog")

    width = len(header)
    values = []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise ParseError(f"{path}:{line}: expected {width} columns")

        try:
            values.append([float(value) for value in row])
        except ValueError:
            raise ParseError(f"{path}:{line}: expected numbers")

    if not values:
        return BcDataset.empty(task)

    table = np.array(values, dtype=np.float64)

    return BcDataset(task, table[:, :-1], table[:, -1])


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    learning_rate: float = 1e-3
    batch_size: int = 64
    seed: int = 0
    validation_fraction: float = 0.1
    optimizer: str = "sgd"
    balance_classes: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise InputValidationError(f"epochs must be at least 1: {self.epochs}")

        if not self.learning_rate > 0:
            raise InputValidationError(
                f"learning rate must be positive: {self.learning_rate}"
            )

        if self.batch_size < 1:
            raise InputValidationError(
                f"batch size must be at least 1: {self.batch_size}"
            )

        if not 0 <= self.validation_fraction < 1:
            raise InputValidationError(
                f"validation fraction must be in [0, 1): {self.validation_fraction}"
            )

        if self.optimizer not in OPTIMIZERS:
            raise InputValidationError(
                f"unknown optimizer {self.optimizer!r} "
                f"(expected one of {', '.join(OPTIMIZERS)})"
            )


@dataclass(frozen=True)
class EpochLoss:
    epoch: int
    train: float
    validation: Optional[float]


@dataclass(frozen=True)
class TrainResult:
    model: MlpModel
    history: list[EpochLoss]


def forward_layers(
    weights: Sequence[np.ndarray], biases: Sequence[np.ndarray], inputs: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Run normalized inputs through the layers, keeping what backprop needs

    Returns:
        The input to each layer and the pre-activation of each layer
    """
    activations = [inputs]
    pre_activations = []

    last = len(weights) - 1
    values = inputs
    for index, (weight, bias) in enumerate(zip(weights, biases)):
        values = values @ weight.T + bias
        pre_activations.append(values)

        if index < last:
            values = np.maximum(values, 0.0)
            activations.append(values)

    return activations, pre_activations


def loss_and_gradients(
    task: Task,
    weights: Sequence[np.ndarray],
    biases: Sequence[np.ndarray],
    inputs: np.ndarray,
    labels: np.ndarray,
    class_weights: Optional[np.ndarray] = None,
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """The loss over a batch and its gradients

    followSpeed uses the mean squared error and laneChange the mean
    softmax cross-entropy, weighted per class if class_weights is given.

    Args:
        task: Which loss to use
        weights: Weight matrices, shape (out, in)
        biases: Bias vectors
        inputs: Normalized inputs, shape (rows, in)
        labels: Target speeds or lane choice indices
        class_weights: laneChange only, one weight per lane choice

    Returns:
        loss, weight gradients, bias gradients
    """
    activations, pre_activations = forward_layers(weights, biases, inputs)
    outputs = pre_activations[-1]
    rows = inputs.shape[0]

    if task is Task.FOLLOW_SPEED:
        error = outputs[:, 0] - labels
        loss = float(np.mean(error**2))
        delta = (2.0 / rows) * error[:, np.newaxis]
    else:
        classes = labels.astype(np.int64)
        shifted = outputs - outputs.max(axis=1, keepdims=True)
        exponentials = np.exp(shifted)
        totals = exponentials.sum(axis=1, keepdims=True)
        log_probabilities = shifted - np.log(totals)

        row_weights = np.ones(rows)
        if class_weights is not None:
            row_weights = class_weights[classes]
        # a batch of zero-weight rows has no loss
        total = row_weights.sum() or 1.0

        picked = log_probabilities[np.arange(rows), classes]
        loss = float(-(row_weights @ picked) / total)

        delta = exponentials / totals
        delta[np.arange(rows), classes] -= 1.0
        delta *= row_weights[:, np.newaxis] / total

    weight_gradients: list[np.ndarray] = [np.empty(0)] * len(weights)
    bias_gradients: list[np.ndarray] = [np.empty(0)] * len(biases)

    for index in range(len(weights) - 1, -1, -1):
        weight_gradients[index] = delta.T @ activations[index]
        bias_gradients[index] = delta.sum(axis=0)

        if index > 0:
            delta = (delta @ weights[index]) * (pre_activations[index - 1] > 0)

    return loss, weight_gradients, bias_gradients


def _loss(
    task: Task,
    weights: Sequence[np.ndarray],
    biases: Sequence[np.ndarray],
    inputs: np.ndarray,
    labels: np.ndarray,
    class_weights: Optional[np.ndarray],
) -> float:
    return loss_and_gradients(task, weights, biases, inputs, labels, class_weights)[0]


def balanced_class_weights(labels: np.ndarray) -> np.ndarray:
    """Lane choice weights inversely proportional to how often each occurs

    Every class present ends up with the same total weight. Absent
    classes get 0.
    """
    counts = np.bincount(labels.astype(np.int64), minlength=3).astype(np.float64)
    present = counts > 0

    weights = np.zeros(3)
    weights[present] = len(labels) / (present.sum() * counts[present])

    return weights


class Adam:
    """Adam updates for a fixed list of parameter arrays, applied in place"""

    def __init__(self, parameters: Sequence[np.ndarray], learning_rate: float):
        self.parameters = list(parameters)
        self.learning_rate = learning_rate
        self.first = [np.zeros_like(parameter) for parameter in self.parameters]
        self.second = [np.zeros_like(parameter) for parameter in self.parameters]
        self.steps = 0

    def step(self, gradients: Sequence[np.ndarray]):
        beta1, beta2 = ADAM_BETAS
        self.steps += 1
        size = self.learning_rate * math.sqrt(1 - beta2**self.steps) / (
            1 - beta1**self.steps
        )

        for parameter, gradient, first, second in zip(
            self.parameters, gradients, self.first, self.second
        ):
            first *= beta1
            first += (1 - beta1) * gradient
            second *= beta2
            second += (1 - beta2) * gradient**2
            parameter -= size * first / (np.sqrt(second) + ADAM_EPSILON)


def bc_train(
    dataset: BcDataset,
    architecture: Sequence[int],
    mask: FeatureMask,
    config: TrainConfig = TrainConfig(),
) -> TrainResult:
    """Fit an MLP to a dataset by mini-batch gradient descent

    The validation split, initialization and batch order all come from
    one generator seeded with config.seed, so a run is reproducible to
    the bit. Normalization stats are computed on the training split;
    masked features get mean 0 and std 1.

    Steps are plain SGD unless config.optimizer is "adam". With
    config.balance_classes, rare lane choices weigh as much in the
    laneChange loss as Stay does.

    Args:
        dataset: The (features, label) rows
        architecture: Layer sizes, starting with the catalog size and
            ending with the number of outputs (1 or 3)
        mask: The features the model may use
        config: Training hyperparameters

    Raises:
        EmptyDataset: if the dataset has no rows
    """
    task = dataset.task

    if len(dataset) == 0:
        raise EmptyDataset(f"no {task.value} rows to train on")

    if mask.task is not task:
        raise ModelTaskMismatch(
            f"a {mask.task.value} mask can't train a {task.value} model"
        )

    sizes = list(architecture)
    if len(sizes) < 2 or sizes[0] != len(catalog(task)) or sizes[-1] != task.outputs:
        raise DimensionMismatch(
            f"{task.value} architectures run from {len(catalog(task))} inputs to "
            f"{task.outputs} outputs, got {sizes}"
        )

    if any(size < 1 for size in sizes):
        raise DimensionMismatch(f"layer sizes must be positive: {sizes}")

    rng = np.random.default_rng(config.seed)

    rows = len(dataset)
    order = rng.permutation(rows)
    validation_rows = min(int(rows * config.validation_fraction), rows - 1)
    validation_index = order[:validation_rows]
    train_index = order[validation_rows:]

    masked = apply_mask(mask, dataset.features)

    mean = masked[train_index].mean(axis=0)
    std = masked[train_index].std(axis=0)

    degenerate = []
    for index, name in enumerate(catalog(task)):
        if not mask.flags[index]:
            mean[index], std[index] = 0.0, 1.0
        elif std[index] == 0:
            std[index] = 1.0
            degenerate.append(name)

    if degenerate:
        LOGGER.warning(
            "features with zero variance, using std 1: %s", ", ".join(degenerate)
        )

    inputs = (masked - mean) / std
    labels = dataset.labels.astype(np.float64)

    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        weights.append(rng.normal(0.0, math.sqrt(2.0 / fan_in), (fan_out, fan_in)))
        biases.append(np.zeros(fan_out))

    # start the output at the label prior, which balancing makes uniform
    train_labels = labels[train_index]
    class_weights = None
    if task is Task.FOLLOW_SPEED:
        biases[-1][0] = train_labels.mean()
    elif config.balance_classes:
        class_weights = balanced_class_weights(train_labels)
        LOGGER.debug("lane choice weights: %s", class_weights.tolist())
    else:
        counts = np.bincount(train_labels.astype(np.int64), minlength=3)
        biases[-1] = np.log((counts + 1.0) / (len(train_labels) + 3.0))

    adam = None
    if config.optimizer == "adam":
        adam = Adam([*weights, *biases], config.learning_rate)

    history = []
    for epoch in range(1, config.epochs + 1):
        shuffled = rng.permutation(train_index)

        for start in range(0, len(shuffled), config.batch_size):
            batch = shuffled[start : start + config.batch_size]
            _, weight_gradients, bias_gradients = loss_and_gradients(
                task, weights, biases, inputs[batch], labels[batch], class_weights
            )

            if adam is not None:
                adam.step([*weight_gradients, *bias_gradients])
                continue

            for index in range(len(weights)):
                weights[index] -= config.learning_rate * weight_gradients[index]
                biases[index] -= config.learning_rate * bias_gradients[index]

        train_loss = _loss(
            task,
            weights,
            biases,
            inputs[train_index],
            labels[train_index],
            class_weights,
        )
        validation_loss = None
        if validation_rows:
            validation_loss = _loss(
                task,
                weights,
                biases,
                inputs[validation_index],
                labels[validation_index],
                class_weights,
            )

        history.append(EpochLoss(epoch, train_loss, validation_loss))
        LOGGER.debug(
            "epoch %d: train loss %.6g, validation loss %s",
            epoch,
            train_loss,
            "n/a" if validation_loss is None else f"{validation_loss:.6g}",
        )

    final = history[-1]
    LOGGER.info(
        "trained %s model %s on %d rows for %d epochs: train loss %.6g",
        task.value,
        sizes,
        len(train_index),
        config.epochs,
        final.train,
    )

    model = MlpModel(
        task,
        mask,
        tuple(weights),
        tuple(biases),
        mean,
        std,
        {
            "feature_catalog": FEATURE_CATALOG_VERSION,
            "epochs": config.epochs,
            "learning_rate": config.learning_rate,
            "batch_size": config.batch_size,
            "seed": config.seed,
            "validation_fraction": config.validation_fraction,
            "optimizer": config.optimizer,
            "balance_classes": config.balance_classes,
            "rows": rows,
            "train_loss": final.train,
            "validation_loss": final.validation,
        },
    )

    return TrainResult(model, history)


__all__ = (
    "Adam",
    "BcDataset",
    "DEFAULT_HIDDEN",
    "EpochLoss",
    "OPTIMIZERS",
    "TrainConfig",
    "TrainResult",
    "balanced_class_weights",
    "bc_train",
    "default_architecture",
    "forward_layers",
    "loss_and_gradients",
    "read_dataset",
    "write_dataset",
)
