"""Exception and warning types raised across the package."""


class QLSearchError(Exception):
    """Base class for computation errors (CLI exit code 3)."""


class IntegrationFailure(QLSearchError):
    pass


class DimensionMismatch(QLSearchError, ValueError):
    pass


class NoPeak(QLSearchError):
    pass


class OutOfRange(QLSearchError, ValueError):
    pass


class CorruptCacheEntry(QLSearchError):
    pass


class AtomOverflow(QLSearchError):
    pass


class VerificationError(QLSearchError):
    """Output files do not match their manifest."""


class ConfigError(Exception):
    """Base class for configuration problems (CLI exit code 2)."""


class SchemaError(ConfigError):
    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ConflictError(ConfigError):
    pass


class TruncationWarning(UserWarning):
    """Squeezed state loses norm to the Fock cutoff."""
