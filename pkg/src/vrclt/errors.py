"""Exception hierarchy.

Numerical failures derive from :class:`NumericalError` so the CLI can map them
to exit status 3; configuration problems raise :class:`ConfigError` (exit 2).
"""


class VrcltError(Exception):
    pass


class ConfigError(VrcltError, ValueError):
    pass


class NumericalError(VrcltError, ArithmeticError):
    pass


class NotPositiveDefinite(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class ScheduleOverflow(NumericalError, OverflowError):
    pass


class Unstable(NumericalError):
    pass


class TruncationNotConverged(NumericalError):
    pass


class SingularCovariance(NumericalError):
    pass


class InadmissibleParameter(VrcltError, ValueError):
    pass


class InadmissibleAlpha(InadmissibleParameter):
    pass


class InadmissibleBeta(InadmissibleParameter):
    pass


class InadmissibleRho(InadmissibleParameter):
    pass


class MatrixStepUnavailable(VrcltError, ValueError):
    pass


class TooFewReplicates(VrcltError, ValueError):
    pass
