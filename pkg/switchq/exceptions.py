__copyright__ = "Copyright (C) 2026 switchq developers"

from switchq.constants import (
    EXIT_CERTIFICATE_REFUSED,
    EXIT_NOT_CONVERGED,
    EXIT_VALIDATION,
)


class BaseError(Exception):
    """
    base error structure class
    """

    exit_code = 1

    def __init__(self, val, message):
        """
        @param val: actual value
        @param message: message shown to the user
        """
        self.val = val
        self.message = message
        super().__init__()

    def __str__(self):
        return "{} --> {}".format(self.val, self.message)


class ValidationError(BaseError):
    """
    exception thrown if an input problem, policy or override is invalid
    """

    exit_code = EXIT_VALIDATION


class InvalidProblemFile(ValidationError):
    """
    exception thrown if a problem document cannot be parsed against the schema
    """

    def __init__(self, val, message="problem file could not be parsed"):
        super().__init__(val, message)


class InvariantViolation(ValidationError):
    """
    exception thrown if a problem field breaks one of its invariants.
    The message names the invariant and the offending index.
    """


class SamplingNotPositive(ValidationError):
    def __init__(
        self, val, message="sampling distribution not strictly positive"
    ):
        super().__init__(val, message)


class RankDeficientFeatures(ValidationError):
    def __init__(self, val, message="feature matrix rank deficient"):
        super().__init__(val, message)


class EnumerationCapExceeded(ValidationError):
    """
    exception thrown if |A|^|S| deterministic policies exceed the cap
    """

    def __init__(self, val, cap):
        message = (
            f"{val} deterministic policies exceed the enumeration cap {cap}"
        )
        super().__init__(val, message)


class ProductCapExceeded(ValidationError):
    """
    exception thrown if exhaustive word enumeration exceeds the product cap
    """

    def __init__(self, val, cap):
        message = (
            f"{val} matrix products exceed the product cap {cap}; "
            f"lower the depth or enable pruning"
        )
        super().__init__(val, message)


class NonUniqueStationaryDistribution(ValidationError):
    def __init__(
        self,
        val,
        message="behavior chain has no unique stationary distribution "
        "(eigenvalue gap check failed)",
    ):
        super().__init__(val, message)


class ZeroMassStateAction(ValidationError):
    def __init__(
        self,
        val,
        message="stationary distribution puts zero mass on a state-action "
        "pair",
    ):
        super().__init__(val, message)


class SingularProjection(ValidationError):
    def __init__(self, val, message="projection matrix is singular"):
        super().__init__(val, message)


class UnsupportedDimension(ValidationError):
    def __init__(
        self, val, message="mesh output needs feature dimension 2 or 3"
    ):
        super().__init__(val, message)


class UnknownPreset(ValidationError):
    def __init__(self, val, presets):
        message = f"unknown preset. Available presets: {sorted(presets)}"
        super().__init__(val, message)


class InvalidOverride(ValidationError):
    """
    exception thrown if a command line override is malformed or an
    override combination is not allowed
    """


class NonConvergence(BaseError):
    """
    exception thrown if an iteration neither converged nor stayed bounded
    """

    exit_code = EXIT_NOT_CONVERGED


class DivergenceDetected(NonConvergence):
    def __init__(self, val, step):
        self.step = step
        message = f"iterates diverged at step {step}"
        super().__init__(val, message)


class CertificateRefused(BaseError):
    """
    exception thrown if a Lyapunov certificate cannot be built for the
    requested decay rate
    """

    exit_code = EXIT_CERTIFICATE_REFUSED


class RepresentationDefect(BaseError):
    """
    exception thrown if an exact switched-system identity fails beyond its
    tolerance
    """

    def __init__(self, val, message="switched representation defect"):
        super().__init__(val, message)
