"""Exception types shared across the toolkit."""


class SubsenseError(Exception):
    """Base class for all toolkit errors."""


class DegenerateParameterError(SubsenseError):
    """A parameter value makes the model undefined (e.g. zero carrying capacity)."""


class GradientEvaluationError(SubsenseError):
    """A finite-difference stencil produced a non-finite model output.

    Carries the offending stencil point(s) so failures can be traced back
    to concrete inputs.
    """

    def __init__(self, message, points=None, indices=None):
        super().__init__(message)
        self.points = points
        self.indices = indices


class DimensionMismatchError(SubsenseError):
    """Inputs disagree on parameter dimension or array shape."""


class EigenSolverError(SubsenseError):
    """The Jacobi iteration failed to converge within its sweep budget."""


class DegenerateSpectrumError(SubsenseError):
    """All eigenvalues are zero; no active dimension can be selected."""


class NonOrthonormalError(SubsenseError):
    """A matrix expected to have orthonormal columns does not, beyond tolerance."""


class UndefinedIndicesError(SubsenseError):
    """Sobol' indices are undefined because the model output has zero variance."""


class UnderDeterminedError(SubsenseError):
    """Fewer training points than polynomial coefficients."""


class InvalidAicError(SubsenseError):
    """AIC requested with n_points <= n_params."""


class SelectionError(SubsenseError):
    """No admissible candidate survived model selection."""


class RegionIndexError(SubsenseError):
    """Region index outside the grid's range."""


class ConfigError(SubsenseError):
    """Invalid run configuration; message names the offending field."""
