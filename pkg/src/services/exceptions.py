class TFDWError(Exception):
    """Base exception for toolkit errors"""
    pass


class ConfigError(TFDWError):
    """Invalid or unknown run configuration"""
    pass


class DomainError(TFDWError):
    """Argument outside the mathematical domain of an operation"""
    pass


class GridMismatchError(TFDWError):
    """Field and kernel live on different grids"""
    pass


class NonConvergenceError(TFDWError):
    """Residual stayed above tolerance"""

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


class AllStartsFailedError(NonConvergenceError):
    pass


class NoSolutionInWindowError(DomainError):
    """mu outside (0, 15 / (64 c_TF))"""
    pass


class BisectionCollapseError(TFDWError):
    """Shooting bracket reached floating-point resolution without isolating the decay"""
    pass


class MassOutOfReachError(TFDWError):
    pass


class InvalidBracketError(TFDWError):
    pass
