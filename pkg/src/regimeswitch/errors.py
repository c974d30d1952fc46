"""Exception types shared across the package."""


class RegimeSwitchError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(RegimeSwitchError, ValueError):
    """Structurally invalid argument: bad shape, non-stochastic matrix, out-of-range value."""


class SizeGuardError(InvalidInputError):
    """An exact-enumeration guard (cap on m**n paths) was exceeded."""


class NumericalError(RegimeSwitchError, ArithmeticError):
    """A computation produced non-finite or degenerate intermediate values."""

    def __init__(self, message: str, step: int | None = None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step


class DegenerateStatsError(NumericalError):
    """Every state lost its statistical mass; no update is possible."""


class DegenerateDesignError(NumericalError):
    """The weighted regression design is singular for an occupied state."""
