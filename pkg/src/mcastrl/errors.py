"""Exception hierarchy for the package."""


class McastError(Exception):
    """Base class for all package errors."""


class TopologyError(McastError):
    pass


class TopologyParseError(TopologyError):
    pass


class SelfLoopError(TopologyError):
    pass


class DuplicateEdgeError(TopologyError):
    pass


class DisconnectedError(TopologyError):
    pass


class MalformedCountersError(McastError):
    """Counter snapshot violates a precondition (e.g. non-positive time delta)."""


class InconsistentCountersError(McastError):
    """Counters are well formed but produce rates outside [0, 1]."""


class InvalidPathError(McastError):
    pass


class UnreachableError(McastError):
    pass


class InvalidRequestError(McastError):
    pass


class OracleSizeError(McastError):
    pass


class TerminalStateError(McastError):
    pass


class DivergenceError(McastError):
    """Raised when a gradient or loss becomes non-finite."""


class CheckpointError(McastError):
    pass
