"""Exception types shared across the package."""


class QWalkError(Exception):
    """Base class for all package errors."""


class InvalidInput(QWalkError, ValueError):
    pass


class EnvironmentExhausted(QWalkError, IndexError):
    """A walk left the pre-allocated tiling; regenerate with a larger extent."""


class StoppedProcess(QWalkError):
    """The fractional part hit 0, so the walk is frozen from here on.

    ``state`` holds the walk state right after the offending step.
    """

    def __init__(self, state, message="fractional part reached 0; the process stops"):
        super().__init__(message)
        self.state = state
