"""The binary model file format

All numbers are little-endian::

    magic         4 bytes  b"MLPB"
    version       u32
    task          u8       0 = followSpeed, 1 = laneChange
    features      u32      n, the catalog size
    mask          ceil(n / 8) bytes, bit i set if feature i is included
    layers        u32      L
    sizes         (L + 1) x u32
    weights       f64, each layer row-major with shape (out, in)
    biases        f64, each layer
    mean          n x f64
    std           n x f64
    metadata      u32 length, then that many bytes of UTF-8 JSON. A
                  "feature_catalog" entry must match the current catalog
    checksum      u32, CRC32 of everything before it
"""
import json
import logging
import struct
import zlib
from pathlib import Path
from typing import Any

import numpy as np

from embedsim.errors import ChecksumError, FormatError, InvalidPathError
from embedsim.learned.features import FeatureMask, Task, catalog
from embedsim.learned.mlp import MlpModel
from embedsim.version import FEATURE_CATALOG_VERSION, MODEL_FORMAT_VERSION

LOGGER = logging.getLogger("embedsim.models")

MAGIC = b"MLPB"

FLOAT = np.dtype("<f8")


def encode_model(model: MlpModel) -> bytes:
    names = catalog(model.task)
    bitset = bytearray((len(names) + 7) // 8)
    for index, included in enumerate(model.mask.flags):
        if included:
            bitset[index // 8] |= 1 << (index % 8)

    sizes = model.layer_sizes
    parts = [
        MAGIC,
        struct.pack("<IBI", MODEL_FORMAT_VERSION, model.task.tag, len(names)),
        bytes(bitset),
        struct.pack(f"<I{len(sizes)}I", len(model.weights), *sizes),
    ]
    parts.extend(weight.astype(FLOAT).tobytes(order="C") for weight in model.weights)
    parts.extend(bias.astype(FLOAT).tobytes() for bias in model.biases)
    parts.append(model.mean.astype(FLOAT).tobytes())
    parts.append(model.std.astype(FLOAT).tobytes())

    metadata = json.dumps(model.metadata, sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<I", len(metadata)))
    parts.append(metadata)

    body = b"".join(parts)

    return body + struct.pack("<I", zlib.crc32(body))


def save_model(model: MlpModel, path: Path):
    """Write a model file"""
    try:
        path.write_bytes(encode_model(model))
    except OSError as exception:
        raise InvalidPathError(f"{path}: {exception}") from exception

    LOGGER.debug("saved %s model to %s", model.task.value, path)


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise FormatError(
                f"truncated model file: {what} needs {size} bytes at offset "
                f"{self.offset}, {len(self.data) - self.offset} left"
            )

        chunk = self.data[self.offset : end]
        self.offset = end

        return chunk

    def unpack(self, layout: str, what: str) -> tuple:
        return struct.unpack(layout, self.take(struct.calcsize(layout), what))

    def floats(self, count: int, what: str) -> np.ndarray:
        return np.frombuffer(self.take(count * 8, what), dtype=FLOAT).astype(
            np.float64
        )


def decode_model(data: bytes) -> MlpModel:
    """Parse the contents of a model file

    Raises:
        FormatError: if the file is malformed or has the wrong magic or version
        ChecksumError: if the contents don't match the checksum
    """
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")

    cursor = _Cursor(data)
    cursor.take(4, "magic")

    version, tag, count = cursor.unpack("<IBI", "header")
    if version != MODEL_FORMAT_VERSION:
        raise FormatError(f"unsupported model format version {version}")

    try:
        task = Task.from_tag(tag)
    except KeyError:
        raise FormatError(f"unknown task tag {tag}")

    names = catalog(task)
    if count != len(names):
        raise FormatError(
            f"{task.value} models have {len(names)} features, file says {count}"
        )

    bitset = cursor.take((count + 7) // 8, "mask")
    included = frozenset(
        name
        for index, name in enumerate(names)
        if bitset[index // 8] & (1 << (index % 8))
    )

    (layers,) = cursor.unpack("<I", "layer count")
    if layers < 1:
        raise FormatError("model file has no layers")

    sizes = cursor.unpack(f"<{layers + 1}I", "layer sizes")

    weights = tuple(
        cursor.floats(rows * columns, f"layer {index} weights").reshape(rows, columns)
        for index, (columns, rows) in enumerate(zip(sizes, sizes[1:]))
    )
    biases = tuple(
        cursor.floats(rows, f"layer {index} biases")
        for index, rows in enumerate(sizes[1:])
    )
    mean = cursor.floats(count, "mean")
    std = cursor.floats(count, "std")

    (length,) = cursor.unpack("<I", "metadata length")
    try:
        metadata = json.loads(cursor.take(length, "metadata").decode("utf-8"))
    except ValueError as exception:
        raise FormatError(f"unreadable model metadata: {exception}") from exception

    body_end = cursor.offset
    (checksum,) = cursor.unpack("<I", "checksum")

    if cursor.offset != len(data):
        raise FormatError(f"{len(data) - cursor.offset} unexpected trailing bytes")

    if zlib.crc32(data[:body_end]) != checksum:
        raise ChecksumError("model file checksum doesn't match its contents")

    if not isinstance(metadata, dict):
        raise FormatError("model metadata should be a JSON object")

    catalog_version = metadata.get("feature_catalog", FEATURE_CATALOG_VERSION)
    if catalog_version != FEATURE_CATALOG_VERSION:
        raise FormatError(
            f"model was trained on feature catalog {catalog_version}, "
            f"this is catalog {FEATURE_CATALOG_VERSION}"
        )

    try:
        return MlpModel(
            task,
            FeatureMask(task, included),
            weights,
            biases,
            mean,
            std,
            metadata,
        )
    except ValueError as exception:
        raise FormatError(f"inconsistent model file: {exception}") from exception


def load_model(path: Path) -> MlpModel:
    """Read a model file"""
    try:
        data = path.read_bytes()
    except OSError as exception:
        raise InvalidPathError(f"{path}: {exception}") from exception

    model = decode_model(data)
    LOGGER.debug(
        "loaded %s model %s from %s", model.task.value, model.layer_sizes, path
    )

    return model


def inspect_model(path: Path) -> dict[str, Any]:
    """Summarize a model file"""
    model = load_model(path)
    data = path.read_bytes()

    return {
        "format_version": MODEL_FORMAT_VERSION,
        "feature_catalog": model.metadata.get("feature_catalog"),
        "task": model.task.value,
        "layer_sizes": model.layer_sizes,
        "mask": model.mask.names(),
        "masked": [
            name for name in catalog(model.task) if name not in model.mask.included
        ],
        "metadata": model.metadata,
        "checksum": f"{struct.unpack('<I', data[-4:])[0]:08x}",
    }


__all__ = (
    "MAGIC",
    "decode_model",
    "encode_model",
    "inspect_model",
    "load_model",
    "save_model",
)
