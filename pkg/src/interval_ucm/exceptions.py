"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class DegenerateInputError(ValidationError):
    """Input is valid in shape but carries no usable variation."""


class FormatError(ValidationError):
    """A file could not be parsed; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalError(ArithmeticError):
    """A recursion hit a numerically singular quantity."""

    def __init__(self, message, time_step=None):
        if time_step is not None:
            message = f"t={time_step}: {message}"
        super().__init__(message)
        self.time_step = time_step
