"""Exception hierarchy shared by all modules."""


class SteadyBoundsError(Exception):
    """Base class for every error raised by the toolkit."""


class InvalidDimension(SteadyBoundsError, ValueError):
    pass


class InvalidCoupling(SteadyBoundsError, ValueError):
    pass


class InvalidModel(SteadyBoundsError, ValueError):
    """A LindbladModel invariant is violated."""


class ModelClassError(SteadyBoundsError, ValueError):
    """The model is outside the emission class the bounds assume.

    The bounds need every jump to be an emission and the total emission
    operator to equal gamma * G0. Thermal baths with absorption fail this.
    """


class InvalidTime(SteadyBoundsError, ValueError):
    pass


class InvalidObservable(SteadyBoundsError, ValueError):
    pass


class DegenerateSteadyState(SteadyBoundsError):
    pass


class SolverFailure(SteadyBoundsError):
    pass


class ZeroRate(SteadyBoundsError, ValueError):
    """Click rate (or <G0>_ss) vanishes, so g2 and the bounds are undefined."""


class DegenerateObservable(SteadyBoundsError, ValueError):
    pass


class UnboundedReport(SteadyBoundsError):
    pass


class IllConditioned(SteadyBoundsError):
    pass


class ThresholdError(SteadyBoundsError, ValueError):
    """Cavity parameters at or above the parametric threshold."""


class StiffnessError(SteadyBoundsError):
    pass


class StatisticsError(SteadyBoundsError):
    def __init__(self, message, required=None):
        super().__init__(message)
        self.required = required


class ConfigError(SteadyBoundsError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
