"""Exception types shared across the pipeline.

Each class carries the process exit code the CLI maps it to, so failure
modes stay distinguishable from shell scripts.
"""


class ArraySepError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 1


class ConfigError(ArraySepError):
    """Invalid or unparseable configuration."""

    exit_code = 2


class AudioIOError(ArraySepError):
    """File I/O failure: missing input, unreadable WAV, unwritable output."""

    exit_code = 3


class StreamError(ArraySepError):
    """A frame stream violates its shape or ordering contract."""

    exit_code = 4


class OverDeterminedSceneError(ArraySepError):
    """More sources than microphones: the scene cannot be separated."""

    exit_code = 5
