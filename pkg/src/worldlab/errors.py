"""Exception taxonomy shared across the package.

Every error the library raises deliberately derives from WorldLabError so a
CLI or service layer can map categories to exit codes / HTTP statuses without
string matching.
"""


class WorldLabError(Exception):
    """Base class for all deliberate errors."""


class ConfigError(WorldLabError, ValueError):
    """Invalid configuration value or flag combination."""


class ShapeError(WorldLabError, ValueError):
    """Array shapes incompatible with the requested operation."""


class DomainError(WorldLabError, ValueError):
    """Argument value outside the operation's domain (range, mask, state)."""


class FormatError(WorldLabError, ValueError):
    """Malformed binary container or config file; message names the field."""


class ScenarioError(WorldLabError, RuntimeError):
    """Scripted scenario infeasible on the given map; carries the blocking coordinate."""

    def __init__(self, message, blocking=None):
        super().__init__(message)
        self.blocking = blocking


class RetrievalError(WorldLabError, RuntimeError):
    """Retrieval preconditions violated (empty or too-small buffer)."""


class OrderingError(WorldLabError, ValueError):
    """Buffer insertion with a non-increasing frame index."""


class CheckpointError(WorldLabError, ValueError):
    """Checkpoint container inconsistent with itself or the requested config."""


class NumericError(WorldLabError, ArithmeticError):
    """Non-finite values where finite ones are required; names the tensor."""


class StateError(WorldLabError, RuntimeError):
    """Operation on a session in the wrong lifecycle state."""
