"""Exception types raised across the package."""


class LmmixError(Exception):
    """Base class for all package errors."""


class DomainError(LmmixError, ValueError):
    """A mean or observation lies outside the family's valid range."""


class ArgumentError(LmmixError, ValueError):
    """An argument is outside its documented range."""


class ConstraintViolation(LmmixError, ValueError):
    """A lambda vector lies outside the closed parameter space."""


class PreconditionError(LmmixError, ValueError):
    pass


class DegenerateObservation(LmmixError, ArithmeticError):
    """An observation has zero density under every component."""

    def __init__(self, index, value):
        self.index = index
        self.value = value
        super().__init__(
            f"observation {index} (x={value!r}) has zero density under every component"
        )


class FitFailure(LmmixError, RuntimeError):
    pass


class ResourceError(LmmixError, RuntimeError):
    pass
