"""Exception hierarchy."""
from typing import Any, Dict, Optional


class PotentialsError(Exception):
    """Base error for the package."""


class ValidityError(PotentialsError):
    """A constraint family was evaluated outside its validity region."""

    def __init__(self, message: str, location: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.location = location or {}


class OutsideDualDomain(ValidityError):
    """No root of t + phi(x, y, s) exists inside the admissible s-range."""

    def __init__(self, message: str = "outside dual domain", location: Optional[Dict[str, Any]] = None):
        super().__init__(message, location)


class NondifferentiablePoint(PotentialsError):
    """Envelope gradient requested at a node that touches a cell boundary."""

    def __init__(self, message: str = "nondifferentiable point", node: Optional[int] = None):
        super().__init__(message)
        self.node = node


class SamplingError(PotentialsError):
    """Rejection sampling did not find enough valid samples."""


class ConfigValidationError(PotentialsError):
    """Invalid configuration, parameters or preconditions."""


class OpticsError(PotentialsError):
    """Raytracing preconditions violated."""


class SolveError(PotentialsError):
    """Solver preconditions violated."""
