"""Shared exception types, mapped to CLI exit codes by the front-end."""


class ConfigError(ValueError):
    """Malformed or out-of-schema configuration input (exit code 2)."""


class DegenerateInputError(ValueError):
    """A closed form was requested for an input it does not cover."""


class ClassificationError(RuntimeError):
    """The hull-membership LP failed to solve; never silently defaulted."""


class NonConvergenceError(RuntimeError):
    """An iterative solver hit its cap before reaching tolerance (exit code 3).

    Carries the best iterate found so far in ``best`` when available.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ResourceCapError(RuntimeError):
    """A computation exceeded its configured resource cap (exit code 4)."""


class WalkRangeError(RuntimeError):
    """A trajectory left the window its environment is defined on."""
