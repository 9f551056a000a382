"""Exception hierarchy shared across the package.

Each class maps to one CLI exit code so scripted pipelines can react to
failures without parsing messages.
"""


class TomodetError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigurationError(TomodetError):
    """Invalid or inconsistent configuration (bad ranges, missing fields)."""

    exit_code = 2


class DegenerateGeometryError(ConfigurationError):
    """Acquisition geometry with zero baseline or temporal span."""


class DataFormatError(TomodetError):
    """Malformed input data (stack files, geometry tables)."""

    exit_code = 3


class CalibrationError(TomodetError):
    """Threshold calibration failed (degenerate statistics, bad trial count)."""

    exit_code = 3


class CalibrationProvenanceError(TomodetError):
    """Detection requested with thresholds calibrated for a different setup."""

    exit_code = 4
