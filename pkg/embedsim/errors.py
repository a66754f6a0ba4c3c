"""Custom errors"""


class EmbedSimError(Exception):
    """Base Error class"""


class InputValidationError(EmbedSimError, ValueError):
    """Errors based on user input"""


class ParseError(InputValidationError):
    """A structured file could not be read"""


class ValidationError(InputValidationError):
    """A structured file was readable but describes something invalid"""


class FlowValidationError(ValidationError):
    """A flow doesn't fit the network it is run on"""


class UnknownFeatureName(InputValidationError):
    """A feature mask names something outside the catalog"""


class DimensionMismatch(InputValidationError):
    """An input vector doesn't match the model it was passed to"""


class ModelTaskMismatch(InputValidationError):
    """A model was used for a task it wasn't trained for"""


class EmptyDataset(InputValidationError):
    """Training was requested with nothing to train on"""


class ScenarioMismatch(InputValidationError):
    """Benchmark reports from different scenarios were compared"""


class UnknownItemError(EmbedSimError, KeyError):
    """Items that don't exist within a network"""


class UnknownRoad(UnknownItemError):
    """A road id that isn't part of the network"""


class InvalidPathError(EmbedSimError, IOError):
    """Errors based on invalid files"""


class LogSinkError(InvalidPathError):
    """A trajectory log couldn't be written"""


class RouteBroken(EmbedSimError):
    """A route lists roads that don't connect"""


class LearnedTeacher(EmbedSimError):
    """A learned model was going to be used as a behavior-cloning teacher"""


class NoSharedVehicles(EmbedSimError):
    """Two logs have no vehicles in common"""


class ModelLoadError(EmbedSimError):
    """A model referenced by a flow couldn't be loaded"""


class FormatError(EmbedSimError, ValueError):
    """Binary data (model files, protocol frames) is malformed"""


class ChecksumError(FormatError):
    """A model file's contents don't match its checksum"""


class BindError(EmbedSimError, OSError):
    """The model server couldn't listen on its endpoint"""


class ServerUnreachable(EmbedSimError, ConnectionError):
    """The model server couldn't be reached"""
