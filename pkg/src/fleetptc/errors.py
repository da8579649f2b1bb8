"""Shared exception types."""


class InvalidInput(ValueError):
    """An argument violates a declared precondition (non-finite, out of range)."""


class ContractViolation(ValueError):
    """A caller broke an API contract (e.g. positive brake demand)."""


class CollisionError(RuntimeError):
    """The ego vehicle closed the gap to the leader; the episode terminates."""


class SynthesisError(ValueError):
    """Route synthesis cannot proceed (degenerate seed profile, etc.)."""
