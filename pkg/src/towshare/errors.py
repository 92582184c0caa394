"""Exception types shared across the package."""


class TowshareError(Exception):
    """Base class for all package errors."""


class ScenarioError(TowshareError):
    """A scenario file could not be parsed or violates an invariant.

    ``path`` names the offending field (e.g. ``flights[3].latest``).
    """

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class InfeasibleError(TowshareError):
    """No schedule satisfies the hard constraints of the request."""


class GuardError(TowshareError):
    """The request exceeds a size guard (e.g. exact search on a large instance)."""
