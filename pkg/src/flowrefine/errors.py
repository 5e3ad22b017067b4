"""Exception types shared across the package.

The CLI maps these to process exit codes: configuration and usage problems
exit with 2, missing or unreadable artifacts with 3, numerical failures
with 4. Library code raises, only the CLI translates.
"""

from __future__ import annotations


class FlowRefineError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(FlowRefineError):
    """Invalid configuration: unknown keys, bad types, missing fields."""


class HashMismatchError(FlowRefineError):
    """Refiner applied to a generator it was not trained against."""


class UnsupportedError(FlowRefineError):
    """Requested quantity is undefined for the given inputs."""


class MissingArtifactError(FlowRefineError):
    """A required file (checkpoint, cache, dump) does not exist."""


class FormatError(FlowRefineError):
    """Base class for malformed binary artifacts."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class VersionMismatchError(FormatError):
    """File declares a container version this code does not read."""


class TruncatedPayloadError(FormatError):
    """File ends before its declared payload does."""


class BadSectionError(FormatError):
    """Container section tag differs from the expected one."""


class DimensionOverflowError(FormatError):
    """Declared array dimensions exceed sane desk-scale bounds."""


class NumericalError(FlowRefineError):
    """Non-finite values appeared during training or integration."""
