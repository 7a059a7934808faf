"""Exception types shared across the package."""


class RoadnetError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(RoadnetError):
    """Shapes of parameters or inputs are mutually inconsistent."""


class CapacityError(RoadnetError):
    """A size cap was exceeded (enumeration bound, neuron/layer caps)."""


class ConfigError(RoadnetError):
    """Invalid configuration or command usage. Maps to exit code 1."""


class DataError(RoadnetError):
    """Malformed or missing data file. Maps to exit code 2."""

    def __init__(self, message, path=None, line=None):
        if path is not None and line is not None:
            message = f"{path}:{line}: {message}"
        elif path is not None:
            message = f"{path}: {message}"
        super().__init__(message)
        self.path = path
        self.line = line
