"""Exception hierarchy shared by all snnforge modules."""


class SNNForgeError(Exception):
    """Base class for every error raised by snnforge."""


class DimensionError(SNNForgeError, ValueError):
    """Operand shapes do not agree."""


class UsageError(SNNForgeError, RuntimeError):
    """An API was called in a state or combination it does not support."""


class GraphError(SNNForgeError, ValueError):
    """The registered invocations do not form a valid execution graph."""


class ResourceError(SNNForgeError, RuntimeError):
    """A hardware resource limit of the backend profile is exceeded."""


class PlacementError(ResourceError):
    """The extracted graph cannot be placed onto the backend."""


class QuantizationError(SNNForgeError, ValueError):
    """A hardware weight lies outside the representable weight levels."""


class DataError(SNNForgeError, ValueError):
    """Backend observables are incomplete or inconsistent."""


class ParameterError(SNNForgeError, ValueError):
    """A numerical parameter is outside its valid domain."""


class ConfigError(SNNForgeError, ValueError):
    """An experiment configuration failed to parse or validate."""
