"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all data, file, and measurement level failures."""


class SchemaError(ToolkitError):
    """A CSV header does not match the expected column schema."""


class ValidationError(ToolkitError):
    """A row or field violates its domain constraints."""


class MeasurementError(ToolkitError):
    """An energy measurement could not be completed or is invalid."""


class FitError(ToolkitError):
    """Least-squares fitting received unusable inputs."""
