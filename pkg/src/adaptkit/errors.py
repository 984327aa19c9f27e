"""Exception taxonomy shared across the toolkit."""

from __future__ import annotations


class AdaptkitError(Exception):
    """Base class for all toolkit errors."""


class SpaceParseError(AdaptkitError):
    """Malformed search-space document. Carries the byte offset when known."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class DomainError(AdaptkitError):
    """A parameter domain is ill-formed (e.g. low >= high, empty choices)."""


class SpaceValidationError(AdaptkitError):
    """An assignment does not lie in its search space."""

    def __init__(self, message: str, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class InputError(AdaptkitError):
    """Caller handed in data that violates an operation's precondition."""


class ConfigError(AdaptkitError):
    """A configuration object is internally inconsistent."""


class StateError(AdaptkitError):
    """Operation invoked on an object in the wrong state (e.g. unfitted model)."""


class NumericalError(AdaptkitError):
    """Linear algebra or optimization failed beyond recoverable jitter."""


class ObjectiveError(AdaptkitError):
    """The black-box objective returned a non-finite value.

    Carries the offending assignment and the partial trace collected so far.
    """

    def __init__(self, message: str, assignment=None, trace=None):
        super().__init__(message)
        self.assignment = assignment
        self.trace = trace


class GraphError(AdaptkitError):
    """An adaptation graph violates its structural invariants."""


class ProtocolError(AdaptkitError):
    """A decider or agent returned something outside the agreed protocol."""


class ConstraintError(AdaptkitError):
    """A decided search space does not narrow the declared one."""


class ExtractionError(AdaptkitError):
    """No parseable payload could be extracted from free-form agent text."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class PlanningError(AdaptkitError):
    """Debate failed to produce a usable decision within the round budget."""

    def __init__(self, message: str, transcript=None):
        super().__init__(message)
        self.transcript = transcript


class TransportError(AdaptkitError):
    """Remote model client failed at the HTTP level."""


class ScriptExhaustedError(AdaptkitError):
    """A scripted mock client ran out of canned replies."""
