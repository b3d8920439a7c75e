"""Exception types shared across the package."""


class EvflowError(Exception):
    """Base class for all evflow errors."""


class OutOfBoundsError(EvflowError):
    """Event coordinates fall outside the sensor geometry."""


class NonMonotonicTimestampError(EvflowError):
    """An event arrived with a timestamp older than the stream head."""


class InsufficientEventsError(EvflowError):
    """Too few points to fit a plane."""


class DegenerateGeometryError(EvflowError):
    """Fit points are collinear or otherwise rank-deficient."""


class NoValidCenterFlowError(EvflowError):
    """Scale selection requires a valid local flow at the center pixel."""


class EmptyClusterError(EvflowError):
    """Cluster window contains no valid flow."""


class LengthMismatchError(EvflowError):
    """Paired inputs have different lengths."""


class EmptyInputError(EvflowError):
    """Operation requires at least one element."""


class DegenerateCloudError(EvflowError):
    """Point cloud has zero spread."""


class EmptySceneError(EvflowError):
    """Scene specification contains no objects."""


class EmptyWindowError(EvflowError):
    """Time window selects no records."""


class ParseError(EvflowError):
    """Malformed input file; carries location context in the message."""


class ConfigError(EvflowError):
    """Invalid configuration value or config file."""
