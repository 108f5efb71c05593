"""Exception types raised across the package."""


class CylchError(Exception):
    pass


class DomainViolation(CylchError, ValueError):
    """A value left the admissible interval of the potential."""


class QuadratureFailure(CylchError):
    pass


class NoConvergence(CylchError):
    def __init__(self, iterations, residual):
        super().__init__(f"linear solve did not converge: {iterations} iterations, residual {residual:.3e}")
        self.iterations = iterations
        self.residual = residual


class NewtonFailure(CylchError):
    def __init__(self, residual_history, message="Newton iteration failed", hint="try reducing dt"):
        last = residual_history[-1] if residual_history else float("nan")
        super().__init__(f"{message} (last residual {last:.3e}); {hint}")
        self.residual_history = list(residual_history)


class GridMismatch(CylchError, ValueError):
    pass


class UnsupportedCombination(CylchError, ValueError):
    pass


class InsufficientSnapshots(CylchError):
    pass


class DegenerateDirection(CylchError, ValueError):
    pass


class NotSingular(CylchError, ValueError):
    pass


class Instability(CylchError):
    pass


class ParseError(CylchError):
    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class ValidationError(CylchError, ValueError):
    pass


class ChecksumMismatch(CylchError):
    pass


class DimsMismatch(CylchError, ValueError):
    pass
