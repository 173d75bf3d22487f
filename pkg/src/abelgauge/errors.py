"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class PreconditionError(ValueError):
    """A stated precondition (usually an inequality on alpha) does not hold."""


class ResourceError(RuntimeError):
    """A search or enumeration would exceed its configured budget."""

    def __init__(self, message, required=None, budget=None):
        super().__init__(message)
        self.required = required
        self.budget = budget


class NotClosedError(ValueError):
    """A 2-form violates the Bianchi identity; carries the offending 3-cell."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness
