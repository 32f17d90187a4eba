"""
Exception types raised by the library.
Input problems derive from ValueError, failures of a computation from RuntimeError.
"""


class DomainError(ValueError):
    """Input outside the admissible range (survival probability, loading, time, ...)."""


class ShapeError(ValueError):
    """Array dimensions do not match."""


class CapacityError(ValueError):
    """Problem size exceeds what the chosen method can enumerate."""


class ConfigError(ValueError):
    """Malformed configuration file or command-line parameters."""


class ConsistencyError(RuntimeError):
    """An internal identity that must hold for valid inputs is violated."""


class NoSolutionError(RuntimeError):
    """A root search found no sign change in its bracket."""


class PricingError(RuntimeError):
    """Pricing failed during a hedge run."""

    def __init__(self, message, step):
        super().__init__(f"{message} (step {step})")
        self.step = step
