"""Exception hierarchy shared by all modules."""


class ReputationError(Exception):
    """Base class for every error raised by :mod:`repgame`."""

    #: CLI exit code used when the error escapes a command.
    exit_code = 1


class InvalidSpec(ReputationError):
    def __init__(self, violations):
        self.violations = list(violations)
        codes = ", ".join(v.code for v in self.violations)
        super().__init__(f"game spec is invalid: {codes}")


class QROrderViolated(ReputationError):
    pass


class ParameterOutOfRange(ReputationError):
    pass


class UnknownType(ReputationError):
    pass


class DimensionMismatch(ReputationError):
    pass


class ZeroProbabilitySignal(ReputationError):
    """The observed public signal has zero marginal probability under the belief."""


class IterationLimitExceeded(ReputationError):
    exit_code = 3


class NoPositiveEpsilon(ReputationError):
    pass


class InsufficientSamples(ReputationError):
    pass


class NonDecayingTail(ReputationError):
    exit_code = 3


class HorizonTooShort(ReputationError):
    exit_code = 3


class NoCommitmentTypes(ReputationError):
    pass


class FullRankRequired(ReputationError):
    pass
