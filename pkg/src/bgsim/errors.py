"""Exception hierarchy shared by the simulation layers."""


class SimError(Exception):
    """Base class for every error raised by bgsim."""


# message-passing rules
class PendingInvocation(SimError):
    pass


class UndefinedTransition(SimError):
    pass


class ReturnNotEnabled(SimError):
    pass


class ForeignMessage(SimError):
    pass


class NotAClient(SimError):
    pass


class BudgetExhausted(SimError):
    """The step budget ran out before the workload finished.

    The partial trace is kept on ``self.trace`` so callers can still
    inspect, persist or check it.
    """

    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


# shared memory
class Crashed(SimError):
    pass


class NoEnabledStatement(SimError):
    pass


class SingleWriterViolation(SimError):
    pass


class DoublePropose(SimError):
    pass


# histories and objects
class MalformedHistory(SimError):
    pass


class IllegalAtomicStep(SimError):
    pass


class BoundExceeded(SimError):
    def __init__(self, msg, stats=None):
        super().__init__(msg)
        self.stats = stats or {}


# refinement
class RefinementViolation(SimError):
    def __init__(self, index, reason):
        super().__init__(f"step {index}: {reason}")
        self.index = index
        self.reason = reason


class UnreachableShape(SimError):
    pass


class PropertyViolation(SimError):
    pass


# harness
class ConfigError(SimError):
    pass


class DigestMismatch(SimError):
    def __init__(self, index, expected, got):
        super().__init__(f"digest mismatch at step {index}: expected {expected}, got {got}")
        self.index = index


class TraceParseError(SimError):
    def __init__(self, lineno, msg):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


class DoubleAccess(SimError):
    """A shared-memory statement touched more than one register."""
