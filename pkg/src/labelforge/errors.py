"""Exception types shared across the package."""


class LabelForgeError(Exception):
    """Base class for all package errors."""


class ConfigError(LabelForgeError):
    """Invalid configuration: bad stage order, unknown kinds, out-of-range parameters."""


class DataError(LabelForgeError):
    """Malformed or inconsistent data: parse failures, shape mismatches, missing files."""


class UnsupportedModelOperation(LabelForgeError):
    """The model kind cannot provide the requested operation (e.g. soft output of a hard-only function)."""
