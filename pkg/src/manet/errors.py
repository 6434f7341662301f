"""Exception types raised across the package."""


class ManetError(Exception):
    """Base class for all package errors."""


class ConfigError(ManetError, ValueError):
    """Invalid configuration, shape mismatch or incompatible model."""


class UsageError(ManetError, RuntimeError):
    """An API was called in a state where it is not allowed."""


class VerificationError(ManetError):
    """A verification harness found the system under test misbehaving."""


class VersionError(ManetError):
    """Checkpoint magic bytes or format version do not match."""


class IntegrityError(ManetError):
    """Checkpoint file is truncated or corrupt."""


class EnvironmentFault(ManetError):
    """An environment raised during training; carries the global step."""

    def __init__(self, step, cause):
        super().__init__(f"environment fault at step {step}: {cause}")
        self.step = step
        self.cause = cause
