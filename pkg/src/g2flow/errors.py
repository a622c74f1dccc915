"""Exception types shared across the package."""


class G2FlowError(Exception):
    pass


class NotPositive(G2FlowError):
    """A 3-form is not a G2-structure (det B <= 0 or B indefinite)."""


class NotIntegrable(G2FlowError):
    """The tau_2 torsion component exceeds the integrability threshold."""


class NumericalAbort(G2FlowError):
    """A time integration had to stop; exit status 2 at the command line."""


class PositivityLost(NumericalAbort):
    pass


class NonFinite(NumericalAbort):
    pass


class ConstraintDrift(NumericalAbort):
    """The coclosed residual grew past the abort threshold."""


class IncompatibleSU3(G2FlowError):
    pass


class ReductionHypothesisViolated(G2FlowError):
    pass


class ParseError(G2FlowError):
    def __init__(self, message, line=None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


class ValidationError(G2FlowError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
