from __future__ import annotations

from typing import Any, Optional


class Base(Exception):
    """Custom Base for all exceptions"""

    exit_code: int = 2

    def __init__(self, text: str, original_error: Optional[Exception] = None, **details: Any):
        super().__init__(text)
        self.original_error = original_error
        self.text = text
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        payload = {"error": self.__class__.__name__, "text": self.text, "exit_code": self.exit_code}
        if self.details:
            payload["details"] = self.details
        if self.original_error is not None:
            payload["cause"] = repr(self.original_error)
        return payload


class ValidationError(Base):
    """Base for inputs that fail validation (exit 1)"""

    exit_code = 1


class InvalidConfig(ValidationError):
    """Raises when a run configuration fails schema or model validation"""


class InvalidArguments(ValidationError):
    """Raises when command-line arguments cannot be parsed"""


class InvalidProfile(ValidationError):
    """Raises when a weight profile is outside the admissible class"""


class WeightBoundViolation(ValidationError):
    """Raises when a pairwise weight exceeds exp(-kappa0 |m - n|) or w(m, m) != 1"""


class ImproperSystem(ValidationError):
    """Raises when a subtraction system fails the properness checks"""


class RegimeError(Base):
    """Raises when a computation is requested outside the regime it is valid in (exit 2)"""

    exit_code = 2


class BudgetExceeded(RegimeError):
    """Raises when a site set or enumeration would exceed the configured budget"""


class FaithfulMaterialization(RegimeError):
    """Raises when a faithful-regime ladder would have to be materialized"""


class SmallnessViolation(RegimeError):
    """Raises when eps0 is too large for a bound to be claimed"""


class LadderRange(RegimeError):
    """Raises when a lattice vector lies beyond the last ladder rung"""


class WindowExceeded(RegimeError):
    """Raises when a search radius exceeds the Diophantine certificate window"""


class ExcludedMomentum(RegimeError):
    """Raises when k lies inside a resonance interval a construction must avoid"""


class SingularBlock(RegimeError):
    """Raises when a pivot block or reduced matrix is singular within tolerance"""


class NonConvergence(RegimeError):
    """Raises when an iteration fails to converge"""


class RootCount(RegimeError):
    """Raises when a root bracket holds the wrong number of sign changes"""


class NearDegeneracy(RegimeError):
    """Raises when an eigenvalue is not simple enough for first-order perturbation"""


class ReconciliationFailure(RegimeError):
    """Raises when two independent evaluations of the same quantity disagree"""


class VerificationFailed(Base):
    """Raises when a verify command finds a violated inequality (exit 3)"""

    exit_code = 3


class DecayVerificationFailed(VerificationFailed):
    """Raises when stored coefficients violate an asserted decay bound"""
