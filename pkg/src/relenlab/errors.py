"""Exception types shared across the package."""


class AdmissibilityError(ValueError):
    """A density left the admissible band ``[rho_min, rho_max]``."""

    def __init__(self, message: str, time: float | None = None):
        if time is not None:
            message = f"{message} (t = {time:.6g})"
        super().__init__(message)
        self.time = time


class VacuumError(AdmissibilityError):
    """A density reached or fell below ``rho_min``."""


class NonFiniteError(ArithmeticError):
    """A field or right-hand side contains NaN or infinity."""

    def __init__(self, message: str, time: float | None = None):
        if time is not None:
            message = f"{message} (t = {time:.6g})"
        super().__init__(message)
        self.time = time


class ConfigError(ValueError):
    """A run configuration is malformed or inconsistent."""
