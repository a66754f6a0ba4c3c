"""The model-server wire format

Every message is a frame of little-endian fields::

    length   u32   1 + 8 * n, the bytes that follow
    type     u8    see MessageType
    payload  n x f64

Requests carry a feature vector. A follow reply carries one speed and a
lane reply three logits. Shutdown has no payload.
"""
import struct
from enum import Enum
from typing import Sequence

import numpy as np

from embedsim.errors import FormatError

HEADER = struct.Struct("<IB")
LENGTH = struct.Struct("<I")

FLOAT = np.dtype("<f8")

# large enough for any feature vector
MAX_VALUES = 1024


class MessageType(Enum):
    FOLLOW_REQUEST = 1
    LANE_REQUEST = 2
    FOLLOW_REPLY = 3
    LANE_REPLY = 4
    SHUTDOWN = 255


def encode_frame(kind: MessageType, values: Sequence[float] | np.ndarray = ()) -> bytes:
    payload = np.asarray(values, dtype=FLOAT).tobytes()
    return HEADER.pack(1 + len(payload), kind.value) + payload


def payload_size(length: int) -> int:
    """How many payload bytes follow the type byte

    Raises:
        FormatError: if length can't describe a frame
    """
    if length < 1 or (length - 1) % 8 or (length - 1) // 8 > MAX_VALUES:
        raise FormatError(f"bad frame length {length}")

    return length - 1


def message_type(raw: int) -> MessageType:
    try:
        return MessageType(raw)
    except ValueError:
        raise FormatError(f"unknown message type {raw}")


def decode_values(payload: bytes) -> np.ndarray:
    return np.frombuffer(payload, dtype=FLOAT).astype(np.float64)


def decode_frame(frame: bytes) -> tuple[MessageType, np.ndarray]:
    """Parse one complete frame"""
    if len(frame) < HEADER.size:
        raise FormatError("frame shorter than its header")

    length, raw_type = HEADER.unpack_from(frame)
    size = payload_size(length)

    if len(frame) != LENGTH.size + length:
        raise FormatError(f"frame says {length} bytes, has {len(frame) - LENGTH.size}")

    payload = frame[HEADER.size : HEADER.size + size]

    return message_type(raw_type), decode_values(payload)


__all__ = (
    "HEADER",
    "MessageType",
    "decode_frame",
    "decode_values",
    "encode_frame",
    "message_type",
    "payload_size",
)
