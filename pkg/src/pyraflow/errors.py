"""Exception types raised by pyraflow."""


class PyraflowError(Exception):
    """Base class for all pyraflow errors."""


class InputError(PyraflowError, ValueError):
    """An argument violates a documented precondition (shape, range, finiteness)."""


class FormatError(PyraflowError, ValueError):
    """A file does not follow the expected on-disk layout."""


class DivergenceError(PyraflowError, ArithmeticError):
    """An iterative run produced a non-finite loss."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"loss became non-finite at iteration {iteration}")
