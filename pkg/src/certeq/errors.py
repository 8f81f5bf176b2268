"""Exception hierarchy shared by every solver in the package."""


class CerteqError(Exception):
    """Base class; ``kind`` is the machine-readable tag used by the CLI."""

    kind = "error"


class DimensionError(CerteqError, ValueError):
    kind = "dimension"


class ShapeError(DimensionError):
    """Raised for symmetry violations and other structural defects."""

    kind = "shape"


class SingularityError(CerteqError, ArithmeticError):
    kind = "singularity"


class ConvergenceError(CerteqError, ArithmeticError):
    kind = "convergence"

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class StabilityError(CerteqError, ValueError):
    """A matrix that must be Schur stable is not."""

    kind = "stability"

    def __init__(self, message, spectral_radius=None):
        super().__init__(message)
        self.spectral_radius = spectral_radius


class StabilizabilityError(CerteqError, ArithmeticError):
    kind = "stabilizability"


class DetectabilityError(CerteqError, ArithmeticError):
    kind = "detectability"


class ControllabilityError(CerteqError, ValueError):
    kind = "controllability"


class DomainError(CerteqError, ValueError):
    """An argument lies outside the domain where a formula is defined."""

    kind = "domain"


class DivergenceError(CerteqError, ArithmeticError):
    kind = "divergence"

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class FitError(CerteqError, ValueError):
    kind = "fit"


class SchemaError(CerteqError, ValueError):
    kind = "schema"
