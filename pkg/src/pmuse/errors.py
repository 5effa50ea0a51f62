"""Exception hierarchy shared by every subpackage."""


class PmuseError(Exception):
    """Base class for all library errors."""


class CaseValidationError(PmuseError, ValueError):
    """A network case violates a structural invariant."""


class IslandingError(CaseValidationError):
    """A topology change disconnects part of the network."""

    def __init__(self, message, component=()):
        super().__init__(message)
        self.component = tuple(component)


class UnknownBusError(PmuseError, KeyError):
    pass


class DivergenceError(PmuseError, ArithmeticError):
    """Newton-Raphson did not converge (or training produced NaN)."""

    def __init__(self, message, last_mismatch=float("nan"), trajectory=()):
        super().__init__(message)
        self.last_mismatch = last_mismatch
        self.trajectory = tuple(trajectory)


class GenerationError(PmuseError, RuntimeError):
    """Too many sampled scenarios failed to produce a converged power flow."""


class SchemaError(PmuseError, ValueError):
    """Feature layouts of a model and a dataset cannot be reconciled."""


class ModelFormatError(PmuseError, ValueError):
    """A persisted model file is corrupt or has an unsupported version."""


class UnobservableError(PmuseError, ArithmeticError):
    """Linear measurement model is rank deficient."""


class SingularCovarianceError(PmuseError, ArithmeticError):
    pass


class QuadratureError(PmuseError, ArithmeticError):
    pass
