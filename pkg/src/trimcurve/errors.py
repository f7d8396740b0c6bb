"""Exception types raised by the estimators."""


class TrimcurveError(Exception):
    """Base class for package errors."""


class NonpositivePropensity(TrimcurveError):
    """An inverse-weighted term met a propensity at or below the floor."""

    def __init__(self, unit, value, floor):
        self.unit = int(unit)
        self.value = float(value)
        self.floor = float(floor)
        super().__init__(
            f"propensity {self.value:.3g} at unit {self.unit} is not above the floor {self.floor:g}"
        )


class DegenerateTrimmedPopulation(TrimcurveError):
    """The trimmed population is empty or its estimated size is not positive."""


class BoundaryThreshold(TrimcurveError):
    """The threshold line search never crossed the target on its grid."""

    def __init__(self, message, t_hat=None, side=None):
        self.t_hat = t_hat
        self.side = side
        super().__init__(message)


class IllConditionedDerivative(TrimcurveError):
    """The estimated denominator derivative in ``t`` is numerically zero."""


class UnsupportedIndicator(TrimcurveError):
    """No analytic threshold derivative is registered for this indicator."""


class FoldTooSmall(TrimcurveError):
    """A cross-fitting training split is too small for the nuisance fitter."""


class SchemaError(TrimcurveError):
    """Input CSV does not follow the expected column layout."""
