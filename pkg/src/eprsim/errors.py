"""Exception hierarchy shared by the simulator modules."""


class EprSimError(Exception):
    """Base class for all errors raised by eprsim."""


class InvalidArgument(EprSimError, ValueError):
    """A parameter is out of range or inconsistent with the state."""


class InvalidState(EprSimError, ValueError):
    """Mean/covariance data is malformed or not physical."""


class InvalidPlan(EprSimError, ValueError):
    """A sampling plan violates the homodyne measurement rules."""


class DegenerateConditioning(EprSimError, ArithmeticError):
    """Conditioning on a quadrature whose variance is (numerically) zero."""


class ProvenanceMismatch(EprSimError, ValueError):
    """Two shot batches that must come from the same state do not."""


class InvalidConfig(EprSimError, ValueError):
    """An experiment configuration is malformed or out of bounds."""
