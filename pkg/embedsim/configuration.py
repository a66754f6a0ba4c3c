"""Tools for accessing embedsim configuration files"""
from __future__ import annotations

import tomllib
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Optional

import tomli_w

from embedsim.errors import InvalidPathError, ParseError
from embedsim.version import CONFIG_VERSION, Version

CONFIG_FILE = "embedsim.toml"


@dataclass(frozen=True)
class SimulationSettings:
    dt: float = 1.0
    collision_tolerance: float = 1e-6
    seed: int = 0


@dataclass(frozen=True)
class LaneChangeSettings:
    hysteresis: float = 5.0
    rear_headway: float = 1.0


@dataclass(frozen=True)
class TrainingSettings:
    epochs: int = 300
    learning_rate: float = 1e-3
    batch_size: int = 64
    seed: int = 0
    validation_fraction: float = 0.1
    optimizer: str = "sgd"
    balance_classes: bool = False


@dataclass(frozen=True)
class BenchSettings:
    endpoint: str = "127.0.0.1:7447"
    repetitions: int = 3


SECTIONS: dict[str, type] = {
    "simulation": SimulationSettings,
    "lane_change": LaneChangeSettings,
    "training": TrainingSettings,
    "bench": BenchSettings,
}


class Configuration:
    """An object representing an embedsim configuration file.

    The file is optional: a Configuration without a file (or pointing at
    a file that doesn't exist) supplies the built-in defaults.
    """

    def __init__(self, file: Optional[Path] = None):
        self.file = file
        self._contents: Optional[dict] = None

    @property
    def contents(self) -> dict[str, Any]:
        """The contents of the configuration file"""

        if self._contents is None:
            self.reload()

        return self._contents  # type: ignore

    @property
    def simulation(self) -> SimulationSettings:
        return self._section("simulation")

    @property
    def lane_change(self) -> LaneChangeSettings:
        return self._section("lane_change")

    @property
    def training(self) -> TrainingSettings:
        return self._section("training")

    @property
    def bench(self) -> BenchSettings:
        return self._section("bench")

    def _section(self, name: str) -> Any:
        section_type = SECTIONS[name]
        raw = self.contents.get(name, {})

        known = {field.name: field.type for field in fields(section_type)}
        unknown = set(raw) - set(known)
        if unknown:
            raise ParseError(
                f"{self.file}: unknown keys in [{name}]: {', '.join(sorted(unknown))}"
            )

        defaults = section_type()
        values = {}
        for key, value in raw.items():
            expected = type(getattr(defaults, key))
            if expected is float and type(value) is int:
                value = float(value)

            if not isinstance(value, expected) or (
                isinstance(value, bool) and expected is not bool
            ):
                raise ParseError(
                    f"{self.file}: {name}.{key} should be a {expected.__name__}"
                )

            values[key] = value

        return section_type(**values)

    def reload(self):
        """Reload the configuration file"""

        if self.file is None or not self.file.exists():
            self._contents = {}
            return

        try:
            with self.file.open("rb") as stream:
                contents = tomllib.load(stream)
        except tomllib.TOMLDecodeError as exception:
            raise ParseError(f"{self.file}: {exception}") from exception
        except OSError as exception:
            raise InvalidPathError(f"{self.file}: {exception}") from exception

        if "version" in contents:
            version = Version.from_dict(contents["version"])
            if not CONFIG_VERSION.compatible(version):
                raise ParseError(
                    f"{self.file}: unsupported configuration version {version}"
                )

        self._contents = contents

    @classmethod
    def new(
        cls, path: Path, contents: Optional[dict[str, Any]] = None
    ) -> Configuration:
        """Write a configuration file, filling in every default"""

        if contents is None:
            contents = {}

        full: dict[str, Any] = {"version": CONFIG_VERSION.as_dict()}
        for name, section_type in SECTIONS.items():
            full[name] = {**asdict(section_type()), **contents.get(name, {})}

        with path.open("wb") as stream:
            tomli_w.dump(full, stream)

        return cls(path)


__all__ = (
    "BenchSettings",
    "Configuration",
    "LaneChangeSettings",
    "SimulationSettings",
    "TrainingSettings",
)
