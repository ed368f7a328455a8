"""Exception hierarchy shared across the engine.

Exit-code mapping used by the CLI: 0 ok, 2 config, 3 I/O, 4 model.
"""


class EchoforgeError(Exception):
    exit_code = 1


class ConfigError(EchoforgeError):
    """Invalid configuration or inconsistent parameters."""

    exit_code = 2


class AudioIOError(EchoforgeError):
    """WAV read/write failures, format or sample-rate rejection."""

    exit_code = 3


class ModelFormatError(EchoforgeError):
    """Model file rejection: bad magic, version, shape or truncation."""

    exit_code = 4
