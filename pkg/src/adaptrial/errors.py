"""Exception types shared across the design engines and the conduct service."""


class AdaptrialError(Exception):
    """Base class for all package errors."""

    code = "Error"

    def __init__(self, message, details=None):
        super().__init__(message)
        self.message = message
        self.details = details or {}


class InvalidConfig(AdaptrialError):
    """Design configuration failed validation.

    ``violations`` is a list of ``{"field": ..., "message": ...}`` records
    covering every problem found, not just the first one.
    """

    code = "InvalidConfig"

    def __init__(self, violations):
        self.violations = list(violations)
        text = "; ".join(f"{v['field']}: {v['message']}" for v in self.violations)
        super().__init__(f"invalid design config: {text}", {"violations": self.violations})


class CorruptLog(AdaptrialError):
    code = "CorruptLog"


class IncompleteCohort(AdaptrialError):
    code = "IncompleteCohort"


class NumericalFailure(AdaptrialError):
    code = "NumericalFailure"


class NoSafeDose(AdaptrialError):
    code = "NoSafeDose"


class BudgetExceeded(AdaptrialError):
    code = "BudgetExceeded"


class NoConvergence(AdaptrialError):
    code = "NoConvergence"


class LookMismatch(AdaptrialError):
    code = "LookMismatch"


class InvalidHR(AdaptrialError):
    code = "InvalidHR"


class InvalidInterim(AdaptrialError):
    code = "InvalidInterim"


class ArmCountMismatch(AdaptrialError):
    code = "ArmCountMismatch"


class MissingStage(AdaptrialError):
    code = "MissingStage"


class InactiveArm(AdaptrialError):
    code = "InactiveArm"


class UnknownStratum(AdaptrialError):
    code = "UnknownStratum"


class DegenerateModel(AdaptrialError):
    code = "DegenerateModel"


class VarianceUnavailable(AdaptrialError):
    code = "VarianceUnavailable"


class NoSignal(AdaptrialError):
    code = "NoSignal"


class TargetUnreachable(AdaptrialError):
    code = "TargetUnreachable"


class InvalidPValue(AdaptrialError):
    code = "InvalidPValue"


class NotMonotone(AdaptrialError):
    code = "NotMonotone"


class SessionStopped(AdaptrialError):
    code = "SessionStopped"


class OutcomeMismatch(AdaptrialError):
    code = "OutcomeMismatch"


class UnknownSession(AdaptrialError):
    code = "UnknownSession"


class UnsupportedDesign(AdaptrialError):
    code = "UnsupportedDesign"


class DepthCap(AdaptrialError):
    code = "DepthCap"


class RepsCapExceeded(AdaptrialError):
    code = "RepsCapExceeded"
