"""Exception hierarchy shared by every module of the simulator."""


class LendingError(Exception):
    """Base class for all simulator errors."""


class RejectedInput(LendingError, ValueError):
    """Malformed input, rejected configuration or an exceeded compute budget."""


class ModelError(LendingError, RuntimeError):
    """A hard error inside the model (non-positive supply, non-finite gradient, ...)."""
