from typing import Dict, List, Optional


class CapeError(Exception):
    """Base class for every error raised by the estimator library."""

    # Set by lla_iterate when an inner solve fails.
    lla_round: Optional[int] = None

    def __str__(self) -> str:
        message = super().__str__()
        if self.lla_round is not None:
            return f"{message} (LLA round {self.lla_round})"
        return message


class InvalidInputError(CapeError, ValueError):
    pass


class ConvergenceError(CapeError):
    """The splitting solver ran out of iterations or stopped short of a KKT point.

    Args:
        message: Human readable description
        iterations: Iterations performed
        primal_residual: Last primal residual ||x - z||
        dual_residual: Last dual residual rho * ||z - z_prev||
    """

    def __init__(
        self,
        message: str,
        iterations: Optional[int] = None,
        primal_residual: Optional[float] = None,
        dual_residual: Optional[float] = None,
    ):
        super().__init__(message)
        self.iterations = iterations
        self.primal_residual = primal_residual
        self.dual_residual = dual_residual


class SingularSystemError(CapeError, ArithmeticError):
    pass


class PortfolioWipeoutError(CapeError):
    def __init__(self, message: str, day: Optional[int] = None):
        super().__init__(message)
        self.day = day


class UndefinedSharpeError(CapeError, ValueError):
    pass


class TuningError(CapeError):
    """Every candidate on a tuning grid failed.

    Args:
        message: Human readable description
        failures: Failure reason per grid value
    """

    def __init__(self, message: str, failures: Optional[Dict[float, str]] = None):
        super().__init__(message)
        self.failures = dict(failures or {})


class ConfigError(CapeError, ValueError):
    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        location = []
        if line is not None:
            location.append(f"line {line}")
        if field is not None:
            location.append(f"field '{field}'")
        if location:
            message = f"{', '.join(location)}: {message}"
        super().__init__(message)
        self.field = field
        self.line = line


class CostTableError(CapeError, ValueError):
    def __init__(self, message: str, missing_assets: Optional[List[str]] = None):
        super().__init__(message)
        self.missing_assets = list(missing_assets or [])
