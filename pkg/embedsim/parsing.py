"""parsing functions for use with the cli and the file loaders"""
from argparse import ArgumentTypeError
from pathlib import Path


def full_path(raw: str) -> Path:
    """Convert a path string into a path"""
    return Path(raw).expanduser().absolute()


def positive_int(raw: str) -> int:
    """An integer strictly greater than zero"""
    try:
        value = int(raw)
    except ValueError:
        raise ArgumentTypeError(f"not an integer: {raw}")

    if value < 1:
        raise ArgumentTypeError(f"must be at least 1: {raw}")

    return value


def nonnegative_int(raw: str) -> int:
    """An integer that is zero or more"""
    try:
        value = int(raw)
    except ValueError:
        raise ArgumentTypeError(f"not an integer: {raw}")

    if value < 0:
        raise ArgumentTypeError(f"must not be negative: {raw}")

    return value


def positive_float(raw: str) -> float:
    """A finite number strictly greater than zero"""
    try:
        value = float(raw)
    except ValueError:
        raise ArgumentTypeError(f"not a number: {raw}")

    if not (0 < value < float("inf")):
        raise ArgumentTypeError(f"must be positive: {raw}")

    return value


def int_list(raw: str) -> list[int]:
    """A comma-separated list of positive integers (e.g., layer sizes)"""
    return [positive_int(part.strip()) for part in raw.split(",") if part.strip()]


def name_list(raw: str) -> list[str]:
    """A comma-separated list of names. An empty string is an empty list"""
    return [part.strip() for part in raw.split(",") if part.strip()]


def endpoint(raw: str) -> tuple[str, int]:
    """A host:port pair"""
    host, _, port = raw.rpartition(":")

    if not host:
        raise ArgumentTypeError(f"endpoint should be host:port: {raw}")

    try:
        number = int(port)
    except ValueError:
        raise ArgumentTypeError(f"invalid port: {raw}")

    if not (0 < number < 65536):
        raise ArgumentTypeError(f"invalid port: {raw}")

    return host, number
