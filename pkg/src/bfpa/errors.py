"""Exception types. The CLI maps ``ValidationError`` to exit 2 and ``RangeError`` to exit 3."""


class ValidationError(ValueError):
    """Bad user input: out-of-domain parameter, inconsistent config."""


class RangeError(ArithmeticError):
    """A numeric request fell outside a tabulated or representable range."""


class InfeasibleError(ValidationError):
    """The requested rate cannot be reached (e.g. R >= M, or a cap below the rate)."""


class FitError(RuntimeError):
    pass
