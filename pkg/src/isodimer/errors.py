class IsodimerError(Exception):
    """Base class for domain errors (reported with exit code 1 by the CLI)."""


class GeometryError(IsodimerError):
    pass


class HeightError(IsodimerError):
    """Height field violates the local increment rules, or has monodromy."""

    def __init__(self, message, cycle=None):
        super().__init__(message)
        self.cycle = cycle


class MoveError(IsodimerError):
    pass


class BranchError(IsodimerError):
    """A pole sits too close to the branch cut of log z."""


class OrientationError(IsodimerError):
    pass
