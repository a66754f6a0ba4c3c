"""Benchmarks of embedded models against an out-of-process model server"""
from embedsim.bench.client import RemoteRunner
from embedsim.bench.harness import (
    ControllerKind,
    WallTimeReport,
    report_speedup,
    run_benchmark,
)
from embedsim.bench.protocol import MessageType, decode_frame, encode_frame
from embedsim.bench.server import ModelServer, serve_models

__all__ = (
    "ControllerKind",
    "MessageType",
    "ModelServer",
    "RemoteRunner",
    "WallTimeReport",
    "decode_frame",
    "encode_frame",
    "report_speedup",
    "run_benchmark",
    "serve_models",
)
