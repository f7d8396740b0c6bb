"""Smoothed trimmed treatment-effect curves for continuous treatments.

Doubly robust one-step estimators of kernel-smoothed, propensity-trimmed
dose-response curves, with fixed or quantile-defined thresholds.
"""
__version__ = "0.1.0"

from .data import Dataset, read_csv
from .errors import (
    BoundaryThreshold,
    DegenerateTrimmedPopulation,
    FoldTooSmall,
    IllConditionedDerivative,
    NonpositivePropensity,
    SchemaError,
    TrimcurveError,
    UnsupportedIndicator,
)
from .estimators import (
    CrossfitPlan,
    EstimateReport,
    TrimSpec,
    crossfit_estimate,
    estimate_curve,
    estimate_eif_plugin_trim,
    estimate_plugin_trim,
    estimate_sate_dr,
    estimate_state_estimated_t,
    estimate_state_fixed_t,
    estimate_threshold,
    quantile_plugin_threshold,
    trimmed_population_profile,
)
from .influence import EifContext, EifValues
from .nuisance import NuisanceModel, NuisanceTable, tabulate
from .smoothing import IndicatorConfig, KernelConfig, QuadratureGrid, default_grid

__all__ = [
    "__version__",
    "BoundaryThreshold",
    "CrossfitPlan",
    "Dataset",
    "DegenerateTrimmedPopulation",
    "EifContext",
    "EifValues",
    "EstimateReport",
    "FoldTooSmall",
    "IllConditionedDerivative",
    "IndicatorConfig",
    "KernelConfig",
    "NonpositivePropensity",
    "NuisanceModel",
    "NuisanceTable",
    "QuadratureGrid",
    "SchemaError",
    "TrimSpec",
    "TrimcurveError",
    "UnsupportedIndicator",
    "crossfit_estimate",
    "default_grid",
    "estimate_curve",
    "estimate_eif_plugin_trim",
    "estimate_plugin_trim",
    "estimate_sate_dr",
    "estimate_state_estimated_t",
    "estimate_state_fixed_t",
    "estimate_threshold",
    "quantile_plugin_threshold",
    "read_csv",
    "tabulate",
    "trimmed_population_profile",
]
