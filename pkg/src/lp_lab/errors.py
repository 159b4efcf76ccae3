"""Exception hierarchy shared by all lp_lab modules."""


class LPLabError(Exception):
    """Base class for every error raised by lp_lab."""


class NonPowerOfTwo(LPLabError, ValueError):
    pass


class ShapeMismatch(LPLabError, ValueError):
    pass


class NumericalFailure(LPLabError):
    """Base class for failures of a numerical stage (CLI exit code 3)."""


class NoNegativeEigenvalue(NumericalFailure):
    pass


class NoConvergence(NumericalFailure):
    def __init__(self, message, time=None):
        if time is not None:
            message = f"{message} (at t={time:.6g})"
        super().__init__(message)
        self.time = time


class PotentialNotLocalized(NumericalFailure):
    pass


class NonFiniteSample(NumericalFailure):
    def __init__(self, message, time=None):
        if time is not None:
            message = f"{message} (at t={time:.6g})"
        super().__init__(message)
        self.time = time


class AssumptionViolated(NumericalFailure):
    pass


class InsufficientSamples(NumericalFailure):
    pass


class HorizonMismatch(NumericalFailure):
    pass


class ConfigError(LPLabError):
    """Base class for configuration problems (CLI exit code 2)."""


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError, ValueError):
    pass
