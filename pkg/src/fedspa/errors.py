"""Exception hierarchy shared across the simulator.

Exit-code mapping used by the CLI: ConfigError -> 2, NumericError -> 3,
DataFormatError -> 4.
"""


class ConfigError(ValueError):
    """Invalid configuration: bad key, bad value, violated invariant."""


class NumericError(RuntimeError):
    """Numeric breakdown at runtime (non-finite loss, degenerate reference)."""


class DataFormatError(ValueError):
    """Malformed external file (IDX dataset, checkpoint, trigger)."""
