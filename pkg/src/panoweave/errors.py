"""Exception taxonomy shared across the package."""


class PanoError(Exception):
    """Base class for all engine errors."""


class ConfigError(PanoError):
    """Invalid or inconsistent run configuration."""


class ParameterError(PanoError, ValueError):
    """An argument is outside its documented range."""


class DimensionError(PanoError, ValueError):
    """Arrays that must agree in shape do not."""


class UnsupportedKindError(PanoError):
    """Operation applied to a canvas kind it does not support."""


class SequencingError(PanoError):
    """A step referenced a view that has not been generated yet."""


class ContractViolationError(PanoError):
    """An inpainting backend modified pixels it was required to keep."""


class TransportError(PanoError):
    """The remote backend could not be reached."""


class ServiceError(PanoError):
    """The remote backend answered with an error status."""


class ProtocolError(PanoError):
    """The remote backend answered with an undecodable or mismatched payload."""
