"""Exception hierarchy shared by all modules."""


class FlowRedirectError(Exception):
    """Base class for every error raised by this package."""


class InvalidSpec(FlowRedirectError, ValueError):
    pass


class InvalidRange(FlowRedirectError, ValueError):
    pass


class ConnectivityFailure(FlowRedirectError):
    """Rejection sampling never produced a strongly connected graph."""


class ParseError(FlowRedirectError, ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class InvariantViolation(FlowRedirectError, ValueError):
    pass


class IndexMismatch(FlowRedirectError, ValueError):
    pass


class SingularSystem(FlowRedirectError, ArithmeticError):
    pass


class SingularResolvent(SingularSystem):
    pass


class NoConvergence(FlowRedirectError, ArithmeticError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class StepTooLarge(FlowRedirectError, ValueError):
    pass


class NonFiniteLoss(FlowRedirectError, ArithmeticError):
    pass


class SkippedPreconditionFailed(FlowRedirectError):
    """A check was not run because its mathematical precondition fails."""


class ConfigError(FlowRedirectError, ValueError):
    pass
