"""Exception types shared across the toolkit."""


class HyqError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(HyqError, ValueError):
    """An assignment or array does not match the model it is used with."""


class CapacityError(HyqError):
    """A problem exceeds the hard size cap of a solver."""


class BackendError(HyqError):
    """A sampler backend failed to produce samples."""


class ResourceLimitError(HyqError):
    """An iteration or node limit was hit before the algorithm finished.

    ``incumbent`` carries the best solution known at that point (or None) and
    ``trace`` the iteration history, so callers can still inspect partial work.
    """

    def __init__(self, message, incumbent=None, trace=None):
        super().__init__(message)
        self.incumbent = incumbent
        self.trace = trace
