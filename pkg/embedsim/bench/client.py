"""A blocking client for the model server

It implements the same runner interface as the embedded models so the
engine can't tell them apart.
"""
import logging
import socket
from typing import Optional

import numpy as np

from embedsim.bench.protocol import (
    HEADER,
    MessageType,
    decode_values,
    encode_frame,
    message_type,
    payload_size,
)
from embedsim.errors import FormatError, ServerUnreachable
from embedsim.learned.mlp import MlpModel

LOGGER = logging.getLogger("embedsim.client")


class RemoteRunner:
    """Evaluates models by asking the model server

    The model passed to each call is ignored: the server answers with
    the models it was started with.

    Raises:
        ServerUnreachable: if the server can't be connected to
    """

    def __init__(self, host: str, port: int, timeout: Optional[float] = 10.0):
        self.host = host
        self.port = port
        self.calls = 0

        try:
            self._socket = socket.create_connection((host, port), timeout=timeout)
        except OSError as exception:
            raise ServerUnreachable(
                f"no model server at {host}:{port}: {exception}"
            ) from exception

        self._socket.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def _receive(self, size: int) -> bytes:
        data = bytearray()
        while len(data) < size:
            chunk = self._socket.recv(size - len(data))
            if not chunk:
                raise ServerUnreachable(
                    f"model server at {self.host}:{self.port} closed the connection"
                )

            data.extend(chunk)

        return bytes(data)

    def request(
        self, kind: MessageType, features: np.ndarray, reply: MessageType, count: int
    ) -> np.ndarray:
        """Send one request and wait for its reply"""
        try:
            self._socket.sendall(encode_frame(kind, features))
            length, raw_type = HEADER.unpack(self._receive(HEADER.size))
            size = payload_size(length)
            answered = message_type(raw_type)
            values = decode_values(self._receive(size))
        except ServerUnreachable:
            raise
        except OSError as exception:
            raise ServerUnreachable(
                f"model server at {self.host}:{self.port}: {exception}"
            ) from exception

        if answered is not reply or len(values) != count:
            raise FormatError(f"expected {reply.name} with {count} values")

        self.calls += 1

        return values

    def follow_speed(self, model: MlpModel, features: np.ndarray) -> float:
        return float(
            self.request(
                MessageType.FOLLOW_REQUEST, features, MessageType.FOLLOW_REPLY, 1
            )[0]
        )

    def lane_logits(self, model: MlpModel, features: np.ndarray) -> np.ndarray:
        return self.request(
            MessageType.LANE_REQUEST, features, MessageType.LANE_REPLY, 3
        )

    def shutdown(self):
        """Ask the server to stop, then disconnect"""
        try:
            self._socket.sendall(encode_frame(MessageType.SHUTDOWN))
        except OSError as exception:
            LOGGER.warning("couldn't send shutdown: %s", exception)

        self.close()

    def close(self):
        self._socket.close()

    def __enter__(self) -> "RemoteRunner":
        return self

    def __exit__(self, *exc_info):
        self.close()


__all__ = ("RemoteRunner",)
