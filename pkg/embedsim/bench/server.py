"""An out-of-process model server

This is the baseline the embedded models are measured against: the
simulator ships every decision's features over a local socket and
waits for the answer.
"""
import asyncio
import logging
from pathlib import Path
from typing import Optional

import numpy as np
from tornado.iostream import IOStream, StreamClosedError
from tornado.tcpserver import TCPServer

from embedsim.bench.protocol import (
    HEADER,
    MessageType,
    decode_values,
    encode_frame,
    message_type,
    payload_size,
)
from embedsim.errors import BindError, FormatError, ModelTaskMismatch
from embedsim.learned.features import Task
from embedsim.learned.mlp import MlpModel, mlp_forward
from embedsim.learned.modelfile import load_model

LOGGER = logging.getLogger("embedsim.server")

DEFAULT_HOST = "127.0.0.1"
DEFAULT_PORT = 7447


class ModelServer(TCPServer):
    """Answers model requests, one at a time per connection

    Args:
        follow: The followSpeed model to serve
        lane: The laneChange model to serve
        shutdown: Set when a client asks the server to stop
    """

    def __init__(
        self,
        follow: Optional[MlpModel],
        lane: Optional[MlpModel],
        shutdown: asyncio.Event,
    ):
        super().__init__()
        self.follow = follow
        self.lane = lane
        self.shutdown = shutdown
        self.requests = 0

    def answer(self, kind: MessageType, features: np.ndarray) -> bytes:
        """The reply frame for a request"""
        if kind is MessageType.FOLLOW_REQUEST:
            if self.follow is None:
                raise FormatError("no followSpeed model is being served")

            return encode_frame(
                MessageType.FOLLOW_REPLY, mlp_forward(self.follow, features)
            )
        elif kind is MessageType.LANE_REQUEST:
            if self.lane is None:
                raise FormatError("no laneChange model is being served")

            return encode_frame(
                MessageType.LANE_REPLY, mlp_forward(self.lane, features)
            )

        raise FormatError(f"{kind.name} isn't a request")

    async def handle_stream(self, stream: IOStream, address: tuple):
        LOGGER.debug("connection from %s", address)

        try:
            while True:
                length, raw_type = HEADER.unpack(await stream.read_bytes(HEADER.size))
                size = payload_size(length)
                kind = message_type(raw_type)
                payload = await stream.read_bytes(size) if size else b""

                if kind is MessageType.SHUTDOWN:
                    LOGGER.info("shutdown requested by %s", address)
                    self.shutdown.set()
                    stream.close()
                    return

                await stream.write(self.answer(kind, decode_values(payload)))
                self.requests += 1
        except StreamClosedError:
            LOGGER.debug("%s disconnected", address)
        except ValueError as exception:
            # malformed frames and feature vectors of the wrong size
            LOGGER.warning("dropping %s: %s", address, exception)
            stream.close()


def _load(path: Optional[Path], task: Task) -> Optional[MlpModel]:
    if path is None:
        return None

    model = load_model(path)
    if model.task is not task:
        raise ModelTaskMismatch(f"{path} is a {model.task.value} model")

    return model


async def serve_models(
    follow: Optional[Path],
    lane: Optional[Path],
    host: str = DEFAULT_HOST,
    port: int = DEFAULT_PORT,
):
    """Serve models until a client sends a shutdown message

    Args:
        follow: The followSpeed model file
        lane: The laneChange model file
        host: The address to listen on
        port: The port to listen on

    Raises:
        BindError: if the server can't listen on host:port
    """
    shutdown = asyncio.Event()
    server = ModelServer(
        _load(follow, Task.FOLLOW_SPEED), _load(lane, Task.LANE_CHANGE), shutdown
    )

    try:
        server.listen(port, address=host)
    except OSError as exception:
        raise BindError(f"can't listen on {host}:{port}: {exception}") from exception

    LOGGER.info("serving models on %s:%d", host, port)
    await shutdown.wait()
    server.stop()
    LOGGER.info("stopped after %d requests", server.requests)


__all__ = ("DEFAULT_HOST", "DEFAULT_PORT", "ModelServer", "serve_models")
