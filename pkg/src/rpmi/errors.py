"""Exception hierarchy shared by all modules."""


class RPMIError(Exception):
    """Base class for every error raised by the package."""


class InvalidArgumentError(RPMIError, ValueError):
    pass


class NonPrimitivePolynomialError(RPMIError, ValueError):
    def __init__(self, poly, period):
        self.poly = poly
        self.period = period
        super().__init__(
            f"polynomial {poly} is not primitive: observed LFSR period {period}, "
            f"expected {2 ** poly.order - 1}"
        )


class InfeasibleSelectionError(RPMIError):
    def __init__(self, n, slots, reason=""):
        self.n = n
        self.slots = slots
        msg = f"no admissible shift selection for n={n}, N={slots}"
        if reason:
            msg += f" ({reason})"
        super().__init__(msg)


class OutOfRangeError(RPMIError, ValueError):
    pass


class SingularOperatingPointError(RPMIError, ArithmeticError):
    pass


class OracleMismatchError(RPMIError, ArithmeticError):
    """Direct and expanded evaluations of the correlation disagree."""


class NumericalError(RPMIError, ArithmeticError):
    pass


class ConfigError(RPMIError, ValueError):
    """A scenario or config file failed validation."""
