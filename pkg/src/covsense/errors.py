"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An argument is outside its admissible range or shapes do not match."""


class StructuralError(RuntimeError):
    """A graph or estimate violates a structural assumption (e.g. a cycle)."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite or singular intermediate."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class InfeasibleDesignError(RuntimeError):
    """No degree distribution satisfies the design constraints."""

    def __init__(self, message, constraint=None):
        super().__init__(message)
        self.constraint = constraint


class SamplingError(RuntimeError):
    """Random graph construction failed after the allowed number of retries."""
