"""Bandwidth selection by estimated risk and indicator smoothing by entropy."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import entr, ndtr

from .data import Dataset
from .estimators import CrossfitPlan, crossfit_table, weighted_mean
from .influence import continuous_eif_matrix
from .nuisance import NuisanceModel, NuisanceTable, tabulate
from .smoothing import IndicatorConfig, KernelConfig, QuadratureGrid, default_grid, smooth_indicator

LN2 = math.log(2.0)


@dataclass(frozen=True)
class RiskReport:
    candidates: tuple  # ((h, risk), ...) in the order given
    h_star: float
    degenerate: bool = False

    def __post_init__(self):
        if not self.candidates:
            raise ValueError("risk report needs at least one candidate")


@dataclass(frozen=True)
class EntropyReport:
    candidates: tuple  # ((epsilon, entropy), ...) in the order given
    eps_star: float
    target: float = 0.05
    degenerate: bool = False


# --------------------------------------------------------------------------
# grids


def integration_grid(a_values, extend: float, step: float | None = None) -> np.ndarray:
    """Evaluation range widened by ``extend`` on each side, at the
    evaluation spacing (or ``step``)."""
    a_values = np.sort(np.atleast_1d(np.asarray(a_values, dtype=float)))
    if step is None:
        step = float(np.min(np.diff(a_values))) if a_values.size > 1 else max(extend, 0.05)
    lo, hi = a_values[0] - extend, a_values[-1] + extend
    k = int(np.ceil((hi - lo) / step - 1e-9))
    return np.round(lo + (hi - lo) * np.arange(k + 1) / k, 12)


def tuning_table(model: NuisanceModel, data: Dataset, a_int, h_max: float, epsilon: float, units=None) -> NuisanceTable:
    """Nuisance table covering every candidate bandwidth: quadrature spans
    ``a_int`` widened by ``5 * h_max``."""
    a_int = np.asarray(a_int, dtype=float)
    grid = default_grid(a_int.min(), a_int.max(), h_max, epsilon=epsilon)
    return tabulate(model, data, a_int, grid, units)


# --------------------------------------------------------------------------
# risk


def _trapezoid_weights(points):
    return QuadratureGrid.trapezoid(points).weights


def estimate_risk(h: float, data: Dataset, table: NuisanceTable, indicator: IndicatorConfig, t: float) -> float:
    """Estimated risk of the trimmed curve at bandwidth ``h``.

    ``P_n{int psi_h(a)^2 S da} - 2 P_n{int psi_h(a) S mu da}`` with ``S`` and
    ``mu`` evaluated at the integration points ``table.a_values`` and the
    integral by trapezoid over those points.  The weight function is
    ``w(a) = int S dP(x)``.
    """
    a_int = table.a_values
    kernel = KernelConfig(h)
    if not table.grid.spans(a_int, 5 * h):
        raise ValueError(f"table quadrature does not span 5h beyond the integration grid for h={h}")
    mat = continuous_eif_matrix(data, table, kernel, indicator, a_int, t)
    w = data.w
    num = weighted_mean(mat["num"], w)
    den = weighted_mean(mat["den"], w)
    if np.any(~(den > 0)):
        from .errors import DegenerateTrimmedPopulation

        bad = a_int[~(den > 0)]
        raise DegenerateTrimmedPopulation(f"nonpositive denominator at a={bad[0]} for h={h}")
    psi = num / den
    s = smooth_indicator(table.pi_eval, t, indicator)
    ws = weighted_mean(s, w)
    wsmu = weighted_mean(s * table.mu_eval, w)
    q = _trapezoid_weights(a_int)
    return float(q @ (psi * psi * ws) - 2.0 * q @ (psi * wsmu))


def select_bandwidth(candidates, data: Dataset, table: NuisanceTable, indicator: IndicatorConfig, t: float) -> RiskReport:
    """Risk path over ``candidates`` and its minimiser (ties go to the smaller ``h``)."""
    candidates = [float(h) for h in candidates]
    if not candidates:
        raise ValueError("no bandwidth candidates")
    risks = [estimate_risk(h, data, table, indicator, t) for h in candidates]
    best = min(range(len(candidates)), key=lambda k: (risks[k], candidates[k]))
    return RiskReport(tuple(zip(candidates, risks)), candidates[best], degenerate=len(candidates) == 1)


def crossfit_risk_path(
    candidates, data: Dataset, plan: CrossfitPlan, fit_recipe, indicator: IndicatorConfig, t: float, a_int
) -> RiskReport:
    """:func:`select_bandwidth` with nuisances cross-fit: every unit's
    nuisance values come from a model trained without its fold."""
    a_int = np.asarray(a_int, dtype=float)
    grid = default_grid(a_int.min(), a_int.max(), max(candidates), epsilon=indicator.epsilon)
    table = crossfit_table(data, plan, fit_recipe, a_int, grid)
    return select_bandwidth(candidates, data, table, indicator, t)


# --------------------------------------------------------------------------
# entropy


def binary_entropy(s, s_complement=None):
    """Entropy in bits of a Bernoulli(``s``) variable, with ``0 log 0 = 0``.

    Pass ``s_complement`` (``1 - s`` computed without cancellation) when
    ``s`` is close to 1.
    """
    s = np.asarray(s, dtype=float)
    sc = 1.0 - s if s_complement is None else np.asarray(s_complement, dtype=float)
    return (entr(s) + entr(sc)) / LN2


def estimate_entropy(epsilon: float, data: Dataset, table: NuisanceTable, t, a_values=None) -> float:
    """Average conditional entropy of the smoothed indicator.

    ``-P_n[s log2 s + (1-s) log2(1-s)]`` with ``s = S(pi_hat(a|X), t)``,
    averaged uniformly over ``a_values`` (default: all tabulated points).
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    a_values = table.a_values if a_values is None else np.atleast_1d(np.asarray(a_values, dtype=float))
    cols = [table.eval_index(a) for a in a_values]
    t = np.broadcast_to(np.asarray(t, dtype=float), (len(cols),))
    z = (table.pi_eval[:, cols] - t[None, :]) / epsilon
    h = binary_entropy(ndtr(z), ndtr(-z))
    return float(np.clip(np.mean(weighted_mean(h, data.w)), 0.0, 1.0))


def select_epsilon(candidates, data: Dataset, table: NuisanceTable, t, target: float = 0.05, a_values=None) -> EntropyReport:
    """Candidate whose entropy is closest to ``target``; ties go to the smaller ``epsilon``."""
    candidates = [float(e) for e in candidates]
    if not candidates:
        raise ValueError("no epsilon candidates")
    ent = [estimate_entropy(e, data, table, t, a_values) for e in candidates]
    best = min(range(len(candidates)), key=lambda k: (abs(ent[k] - target), candidates[k]))
    return EntropyReport(tuple(zip(candidates, ent)), candidates[best], float(target), degenerate=len(candidates) == 1)


# --------------------------------------------------------------------------
# export


def write_risk_csv(report: RiskReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["h", "risk", "selected"])
        for h, r in report.candidates:
            writer.writerow([format(h, ".17g"), format(r, ".17g"), int(h == report.h_star)])


def write_entropy_csv(report: EntropyReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epsilon", "entropy", "selected"])
        for e, v in report.candidates:
            writer.writerow([format(e, ".17g"), format(v, ".17g"), int(e == report.eps_star)])
