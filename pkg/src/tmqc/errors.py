class DimensionError(ValueError):
    """Array shapes that do not line up."""


class DomainError(ValueError):
    """Argument outside the admissible domain (nonpositive mass, empty mask, ...)."""


class NumericError(RuntimeError):
    """Non-finite state or eigensolver failure during propagation."""
