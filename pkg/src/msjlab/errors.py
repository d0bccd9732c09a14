"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A workload, policy or experiment configuration is invalid."""


class InstabilityError(ValueError):
    """The requested quantity only exists for a stable system."""


class ConvergenceError(RuntimeError):
    """An iterative solve stopped before reaching its tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual
