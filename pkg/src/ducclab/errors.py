"""Exception types shared across the package."""


class DuccLabError(Exception):
    """Base class for all package-specific errors."""


class InvalidDimensionError(DuccLabError, ValueError):
    """Orbital/electron counts or matrix dimensions are inconsistent."""


class SectorMismatchError(DuccLabError, ValueError):
    """Objects belong to different particle-number sectors or bases."""


class OperatorPropertyError(DuccLabError, ValueError):
    """An operator violates a required property (hermiticity, unitarity,
    anti-hermiticity, finiteness, or excitation-class purity)."""


class IntermediateNormalizationError(DuccLabError, ValueError):
    """Reference coefficient of a state is too small for cluster analysis."""


class BranchCutError(DuccLabError, ArithmeticError):
    """Principal matrix logarithm is ill-defined (eigenvalue at -1)."""


class OrderingViolationError(DuccLabError, RuntimeError):
    """A previously eliminated determinant coefficient re-grew during a sweep."""


class CasSupportError(DuccLabError, ValueError):
    """A state expected to live in the active space has external support."""


class NormDriftError(DuccLabError, RuntimeError):
    """Integrator norm drift exceeded its per-step tolerance."""


class ConvergenceError(DuccLabError, RuntimeError):
    """Iterative flow failed to converge within the step budget."""


class ConfigError(DuccLabError, ValueError):
    """Run configuration could not be parsed or validated."""
