"""Exception hierarchy shared by all modules."""


class TemperedError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgumentError(TemperedError, ValueError):
    pass


class CapacityError(TemperedError):
    """A numerical or storage cap was exceeded (orders, dimensions, weights)."""


class AliasingError(InvalidArgumentError):
    """Quadrature too coarse for the requested truncation order."""


class InsufficientSampleError(InvalidArgumentError):
    pass


class PropagationError(TemperedError, ArithmeticError):
    """A user-supplied functional returned a non-finite value."""
