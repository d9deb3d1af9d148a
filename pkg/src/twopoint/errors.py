"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line runner can map a
failure class onto its process status without a lookup table.
"""


class TwoPointError(Exception):
    exit_code = 2


class ConfigurationError(TwoPointError):
    pass


class DomainError(TwoPointError):
    """Evaluation outside a geometry horizon or a barrier domain."""


class HypothesisError(TwoPointError):
    """A hypothesis of the estimates is not met by the requested experiment."""


class ParameterError(TwoPointError):
    pass


class RangeError(TwoPointError):
    """A value lies outside the range of a barrier at some time."""

    def __init__(self, message, value=None):
        super().__init__(message)
        self.value = value


class MonotonicityError(TwoPointError):
    pass


class ConstructionError(TwoPointError):
    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class PositivityError(TwoPointError):
    pass


class StabilityError(TwoPointError):
    exit_code = 3


class DivergenceError(TwoPointError):
    exit_code = 3
