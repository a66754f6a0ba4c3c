"""
Versioning information for the file formats and interfaces of embedsim.

Version doubles as both the version of the package and the version of
the structured text formats (network, flow, configuration) and will at
least largely be following SemVer. Loaders refuse files whose major
version differs from the one below.

The model file format and the feature catalogs carry plain integer
versions. The format version is written into the model header and the
catalog version into the metadata of trained models.
"""
from typing import Any, NamedTuple, Optional


class Version(NamedTuple):
    major: int
    minor: int
    patch: int
    label: Optional[str] = None

    def as_dict(self) -> dict[str, Optional[str | int]]:
        version: dict[str, Optional[str | int]] = {
            "major": self.major,
            "minor": self.minor,
            "patch": self.patch,
        }

        # TOML has no null
        if self.label:
            version["label"] = self.label

        return version

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "Version":
        return cls(
            int(raw["major"]),
            int(raw["minor"]),
            int(raw["patch"]),
            raw.get("label"),
        )

    def compatible(self, other: "Version") -> bool:
        """Whether a file written at version other can be read"""
        return self.major == other.major

    def __str__(self) -> str:
        version = f"{self.major}.{self.minor}.{self.patch}"

        if self.label:
            version = f"{version}-{self.label}"

        return version


VERSION = Version(0, 1, 0)
NETWORK_VERSION = Version(0, 1, 0)
FLOW_VERSION = Version(0, 1, 0)
CONFIG_VERSION = Version(0, 1, 0)

MODEL_FORMAT_VERSION = 1
FEATURE_CATALOG_VERSION = 1

__version__ = str(VERSION)


__all__ = (
    "__version__",
    "CONFIG_VERSION",
    "FEATURE_CATALOG_VERSION",
    "FLOW_VERSION",
    "MODEL_FORMAT_VERSION",
    "NETWORK_VERSION",
    "VERSION",
    "Version",
)
