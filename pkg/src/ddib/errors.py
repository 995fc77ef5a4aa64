"""Exception hierarchy.

Every error carries the process exit code the command-line front end uses:
1 for usage problems, 2 for bad or incompatible data, 3 for numerical
failures (divergence, non-convergence, singularities).
"""


class DDIBError(Exception):
    exit_code = 2


class ParameterError(DDIBError, ValueError):
    exit_code = 1


class ShapeError(DDIBError, ValueError):
    pass


class FormatError(DDIBError, ValueError):
    """Malformed file contents. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DegenerateDataError(DDIBError, ValueError):
    pass


class CompatibilityError(DDIBError, ValueError):
    pass


class CapacityError(DDIBError, ValueError):
    pass


class CacheMissError(DDIBError):
    exit_code = 1


class NumericError(DDIBError, ArithmeticError):
    exit_code = 3

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class SingularityError(NumericError):
    pass


class TrainingError(NumericError):
    def __init__(self, message, iteration):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


class ConvergenceError(NumericError):
    def __init__(self, message, violation):
        super().__init__(f"{message}; final marginal violation {violation:.3e}")
        self.violation = violation
