"""Point estimates, thresholds and confidence intervals from influence values.

The batch entry point is :func:`estimate_curve`, which evaluates every
requested estimator at every treatment value from one
:class:`~trimcurve.nuisance.NuisanceTable`.  The single-point functions
(``estimate_sate_dr``, ``estimate_state_fixed_t`` and friends) are thin
wrappers around the same code that raise instead of recording failures.

All empirical means and variances are weighted by the dataset weights:
``P_n f = sum(w f) / sum(w)`` and ``Var_n f`` is the weighted variance with
the ``n / (n - 1)`` correction, ``n`` counting units of positive weight.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import norm

from .data import Dataset
from .errors import (
    BoundaryThreshold,
    DegenerateTrimmedPopulation,
    FoldTooSmall,
    IllConditionedDerivative,
    TrimcurveError,
)
from .influence import PI_FLOOR, EifContext, EifValues, continuous_eif_matrix, discrete_eif_matrix
from .kernels import den_path_means
from .nuisance import NuisanceModel, NuisanceTable, tabulate
from .smoothing import (
    IndicatorConfig,
    KernelConfig,
    QuadratureGrid,
    kernel_weight,
    kernel_weight_matrix,
    smooth_indicator,
    smooth_indicator_dpi,
    smooth_indicator_two_sided,
)

ESTIMATOR_IDS = ("SATE_DR", "PLUGIN_TRIM", "EIF_PLUGIN_TRIM", "STATE_DR", "STATE_DR_ESTT", "BINARY_STATE")
CURVE_ESTIMATORS = ("SATE_DR", "PLUGIN_TRIM", "EIF_PLUGIN_TRIM", "STATE_DR")
DERIVATIVE_FLOOR = 1e-10


# --------------------------------------------------------------------------
# configuration and results


@dataclass(frozen=True)
class TrimSpec:
    """Fixed threshold ``t``, or the ``gamma`` quantile searched over
    ``t_min, t_min + step, ..., t_max``."""

    mode: str
    t: float | None = None
    gamma: float | None = None
    t_min: float = 0.0
    t_max: float = 0.5
    step: float = 0.005

    def __post_init__(self):
        if self.mode == "fixed":
            if self.t is None or not np.isfinite(self.t):
                raise ValueError("fixed trimming needs a finite t")
        elif self.mode == "quantile":
            if self.gamma is None or not (0.0 < self.gamma < 1.0):
                raise ValueError("quantile trimming needs gamma in (0, 1)")
            if not (self.step > 0 and self.t_max > self.t_min):
                raise ValueError("threshold grid must be ascending with a positive step")
        else:
            raise ValueError(f"unknown trimming mode {self.mode!r}")

    @classmethod
    def fixed(cls, t: float) -> "TrimSpec":
        return cls("fixed", t=float(t))

    @classmethod
    def quantile(cls, gamma: float, t_min: float = 0.0, t_max: float = 0.5, step: float = 0.005) -> "TrimSpec":
        return cls("quantile", gamma=float(gamma), t_min=float(t_min), t_max=float(t_max), step=float(step))

    @property
    def is_fixed(self) -> bool:
        return self.mode == "fixed"

    @property
    def t_grid(self) -> np.ndarray:
        if self.is_fixed:
            return np.array([self.t])
        k = int(np.floor((self.t_max - self.t_min) / self.step + 1e-9))
        return np.round(self.t_min + self.step * np.arange(k + 1), 12)


@dataclass(frozen=True, eq=False)
class EstimateReport:
    """One estimator at one treatment value.

    ``se`` is NaN for estimators without an interval (the trimmed plug-in);
    ``ci`` is ``None`` whenever no interval is reported.  Failed estimates
    carry ``psi_hat = NaN`` and the error message in ``error``.
    """

    a: float
    estimator_id: str
    psi_hat: float
    num: float
    den: float
    t_used: float
    se: float
    ci: tuple | None
    n_eval: int
    eif: EifValues | None = None
    flags: tuple = ()
    conf_level: float = 0.95
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def covers(self, value: float) -> bool:
        return self.ci is not None and self.ci[0] <= value <= self.ci[1]

    @property
    def ci_width(self) -> float:
        return self.ci[1] - self.ci[0] if self.ci is not None else float("nan")


def _failed(a, estimator_id, exc, n, conf_level) -> EstimateReport:
    nan = float("nan")
    return EstimateReport(
        float(a), estimator_id, nan, nan, nan, nan, nan, None, n,
        flags=(type(exc).__name__,), conf_level=conf_level, error=str(exc),
    )


# --------------------------------------------------------------------------
# weighted empirical measure


def weighted_mean(f, w):
    """``sum(w f) / sum(w)`` along the unit axis (axis 0)."""
    w = np.asarray(w, dtype=float)
    return w @ np.asarray(f, dtype=float) / w.sum()


def weighted_var(f, w):
    """Weighted variance with the ``n / (n - 1)`` small-sample factor.

    Returns 0 when fewer than two units carry positive weight.
    """
    w = np.asarray(w, dtype=float)
    f = np.asarray(f, dtype=float)
    n = int(np.count_nonzero(w))
    if n < 2:
        return np.zeros(f.shape[1:]) if f.ndim > 1 else 0.0
    c = f - weighted_mean(f, w)
    return w @ (c * c) / w.sum() * n / (n - 1)


def _mean_se(f, w):
    """Point estimate, standard error and an ``se undefined`` flag."""
    n = int(np.count_nonzero(w))
    m = float(weighted_mean(f, w))
    if n < 2:
        return m, 0.0, True
    return m, float(np.sqrt(weighted_var(f, w) / n)), False


def _interval(psi, se, z, degenerate):
    if degenerate or not np.isfinite(se):
        return None
    return (psi - z * se, psi + z * se)


def _z(conf_level):
    if not 0 < conf_level < 1:
        raise ValueError("confidence level must lie in (0, 1)")
    return float(norm.ppf(0.5 + conf_level / 2))


# --------------------------------------------------------------------------
# single-column estimators


def _sate_report(a, phi, w, z, conf_level, eif=None):
    psi, se, degenerate = _mean_se(phi, w)
    flags = ("se_undefined",) if degenerate else ()
    return EstimateReport(
        float(a), "SATE_DR", psi, psi, 1.0, float("nan"), se, _interval(psi, se, z, degenerate),
        int(np.count_nonzero(w)), eif, flags, conf_level,
    )


def _trimmed_set(pi_a, t, inclusive):
    keep = pi_a >= t if inclusive else pi_a > t
    return keep


def _plugin_report(a, mu_a, pi_a, t, w, conf_level, inclusive=False):
    keep = _trimmed_set(pi_a, t, inclusive) & (w > 0)
    if not np.any(keep):
        raise DegenerateTrimmedPopulation(f"no unit has propensity above t={t} at a={a}")
    psi = float(weighted_mean(mu_a[keep], w[keep]))
    share = float(w[keep].sum() / w.sum())
    return EstimateReport(
        float(a), "PLUGIN_TRIM", psi, psi * share, share, float(t), float("nan"), None,
        int(keep.sum()), None, ("no_interval",), conf_level,
    )


def _eif_plugin_report(a, phi_sate, pi_a, t, w, z, conf_level, inclusive=False):
    keep = _trimmed_set(pi_a, t, inclusive) & (w > 0)
    if not np.any(keep):
        raise DegenerateTrimmedPopulation(f"no unit has propensity above t={t} at a={a}")
    psi, se, degenerate = _mean_se(phi_sate[keep], w[keep])
    share = float(w[keep].sum() / w.sum())
    flags = ("se_undefined",) if degenerate else ()
    return EstimateReport(
        float(a), "EIF_PLUGIN_TRIM", psi, psi * share, share, float(t), se,
        _interval(psi, se, z, degenerate), int(keep.sum()), None, flags, conf_level,
    )


def _state_report(a, phi_num, phi_den, t, w, z, conf_level, eif=None):
    num = float(weighted_mean(phi_num, w))
    den = float(weighted_mean(phi_den, w))
    if not den > 0:
        raise DegenerateTrimmedPopulation(f"estimated denominator {den} is not positive at a={a}")
    psi = num / den
    _, se, degenerate = _mean_se((phi_num - psi * phi_den) / den, w)
    flags = ("se_undefined",) if degenerate else ()
    return EstimateReport(
        float(a), "STATE_DR", psi, num, den, float(t), se, _interval(psi, se, z, degenerate),
        int(np.count_nonzero(w)), eif, flags, conf_level,
    )


def _state_estt_report(a, phi_num, phi_den, phi_num_dt, phi_den_dt, t_hat, gamma, w, z, conf_level, eif=None):
    num = float(weighted_mean(phi_num, w))
    den = float(weighted_mean(phi_den, w))
    d_num = float(weighted_mean(phi_num_dt, w))
    d_den = float(weighted_mean(phi_den_dt, w))
    if not abs(d_den) >= DERIVATIVE_FLOOR:
        raise IllConditionedDerivative(f"denominator derivative {d_den:.3g} at a={a}, t={t_hat}")
    keep = 1.0 - gamma
    psi = num / keep
    _, se, degenerate = _mean_se(phi_num - (d_num / d_den) * phi_den, w)
    se /= keep
    flags = ("se_undefined",) if degenerate else ()
    return EstimateReport(
        float(a), "STATE_DR_ESTT", psi, num, den, float(t_hat), se, _interval(psi, se, z, degenerate),
        int(np.count_nonzero(w)), eif, flags, conf_level,
    )


# --------------------------------------------------------------------------
# thresholds


@dataclass(frozen=True, eq=False)
class ThresholdResult:
    """Line-search result at one treatment value.

    ``boundary`` is ``None`` for an interior crossing, ``"lower"`` when the
    denominator is already at or below ``1 - gamma`` at ``t_min`` and
    ``"upper"`` when it never gets there (``t_hat`` is then ``t_max``).
    """

    a: float
    gamma: float
    t_hat: float
    t_grid: np.ndarray
    den_path: np.ndarray
    boundary: str | None = None


def quantile_plugin_threshold(values, gamma: float, weights=None) -> float:
    """Lower empirical ``gamma`` quantile: the smallest value whose
    (weighted) empirical CDF reaches ``gamma``."""
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    values = np.asarray(values, dtype=float).ravel()
    w = np.ones_like(values) if weights is None else np.asarray(weights, dtype=float).ravel()
    order = np.argsort(values, kind="stable")
    cdf = np.cumsum(w[order]) / w.sum()
    k = int(np.searchsorted(cdf, gamma - 1e-12, side="left"))
    return float(values[order[min(k, values.size - 1)]])


def den_paths(data: Dataset, table: NuisanceTable, indicator: IndicatorConfig, a_values, t_grid, kernel=None) -> np.ndarray:
    """``P_n{phi_den(a; t)}`` for every evaluation point and grid threshold, (m, T).

    Continuous tables use the kernel and the quadrature grid; discrete
    tables (no grid) use point evaluation.
    """
    a_values = np.atleast_1d(np.asarray(a_values, dtype=float))
    t_grid = np.asarray(t_grid, dtype=float)
    w = data.w
    wn = w / w.sum()
    eps = indicator.epsilon
    if table.grid is None:
        cols = [table.eval_index(a) for a in a_values]
        out = np.empty((a_values.size, t_grid.size))
        for j, c in enumerate(cols):
            pa = table.pi_eval[:, c][:, None]
            hit = (data.a == a_values[j]).astype(float)[:, None]
            s = smooth_indicator(pa, t_grid[None, :], indicator)
            d = smooth_indicator_dpi(pa, t_grid[None, :], indicator)
            out[j] = wn @ (s + (hit - pa) * d)
        return out
    if kernel is None:
        raise ValueError("continuous threshold paths need a kernel")
    kw = kernel_weight_matrix(table.grid, a_values, kernel)
    means = den_path_means(table.pi_grid, w, t_grid, eps)
    integral = kw.T @ (means[0] - means[1])
    k_obs = kernel_weight(data.a[:, None] - a_values[None, :], kernel)
    d_obs = smooth_indicator_dpi(table.pi_obs[:, None], t_grid[None, :], indicator)
    return integral + (wn[:, None] * k_obs).T @ d_obs


def select_threshold(path, t_grid, gamma: float, a: float = float("nan")) -> ThresholdResult:
    """Smallest grid ``t`` with ``path <= 1 - gamma``, by linear scan."""
    path = np.asarray(path, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    below = np.flatnonzero(path <= 1.0 - gamma)
    if below.size == 0:
        return ThresholdResult(float(a), gamma, float(t_grid[-1]), t_grid, path, "upper")
    k = int(below[0])
    return ThresholdResult(float(a), gamma, float(t_grid[k]), t_grid, path, "lower" if k == 0 else None)


def bisect_threshold(path, t_grid, gamma: float) -> float:
    """Bisection over grid indices; agrees with :func:`select_threshold`
    whenever the path is nonincreasing.  Kept as an independent check."""
    path = np.asarray(path, dtype=float)
    target = 1.0 - gamma
    lo, hi = 0, path.size - 1
    if path[lo] <= target:
        return float(t_grid[lo])
    if path[hi] > target:
        return float(t_grid[hi])
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if path[mid] <= target:
            hi = mid
        else:
            lo = mid
    return float(t_grid[hi])


def estimate_thresholds(
    data: Dataset, table: NuisanceTable, indicator: IndicatorConfig, a_values, trim: TrimSpec, kernel=None
) -> list[ThresholdResult]:
    a_values = np.atleast_1d(np.asarray(a_values, dtype=float))
    t_grid = trim.t_grid
    paths = den_paths(data, table, indicator, a_values, t_grid, kernel)
    return [select_threshold(paths[j], t_grid, trim.gamma, a) for j, a in enumerate(a_values)]


# --------------------------------------------------------------------------
# batch evaluation


def _eif_matrix(data, table, kernel, indicator, a_values, t, with_dt, pi_floor):
    if table.grid is None:
        return discrete_eif_matrix(data, table, indicator, a_values, t, with_dt, pi_floor)
    return continuous_eif_matrix(data, table, kernel, indicator, a_values, t, with_dt, pi_floor)


def _eif_matrix_per_column(data, table, kernel, indicator, a_values, t, with_dt, pi_floor):
    """Column-by-column fallback so that one bad evaluation point does not
    sink the rest.  Returns (matrix dict with NaN columns, {j: exception})."""
    t = np.broadcast_to(np.asarray(t, dtype=float), a_values.shape)
    cols, errors = [], {}
    for j, a in enumerate(a_values):
        try:
            cols.append(_eif_matrix(data, table, kernel, indicator, [a], t[j], with_dt, pi_floor))
        except TrimcurveError as exc:
            errors[j] = exc
            cols.append(None)
    template = next((c for c in cols if c is not None), None)
    if template is None:
        return None, errors
    out = {}
    for key in template:
        out[key] = np.column_stack([
            c[key][:, 0] if c is not None else np.full(data.n, np.nan) for c in cols
        ])
    return out, errors


def _robust_matrix(data, table, kernel, indicator, a_values, t, with_dt, pi_floor):
    try:
        return _eif_matrix(data, table, kernel, indicator, a_values, t, with_dt, pi_floor), {}
    except TrimcurveError:
        return _eif_matrix_per_column(data, table, kernel, indicator, a_values, t, with_dt, pi_floor)


def _eif_values(mat, j):
    if mat is None:
        return None
    return EifValues(
        phi_num=mat["num"][:, j], phi_den=mat["den"][:, j], phi_sate=mat["sate"][:, j],
        phi_num_dt=mat["num_dt"][:, j] if "num_dt" in mat else None,
        phi_den_dt=mat["den_dt"][:, j] if "den_dt" in mat else None,
    )


def estimate_curve(
    data: Dataset,
    table: NuisanceTable,
    indicator: IndicatorConfig,
    trim: TrimSpec,
    kernel: KernelConfig | None = None,
    a_values=None,
    estimators=CURVE_ESTIMATORS,
    conf_level: float = 0.95,
    pi_floor: float = PI_FLOOR,
    keep_eif: bool = False,
) -> list[EstimateReport]:
    """Every requested estimator at every evaluation point.

    ``table`` decides the treatment type: with a quadrature grid the
    continuous kernel-smoothed estimators are used, without one the discrete
    versions (``1(A = a)`` in place of the kernel).  ``STATE_DR`` under a
    quantile :class:`TrimSpec` becomes ``STATE_DR_ESTT`` (line-searched
    threshold); the trimmed plug-ins then use the empirical propensity
    quantile.  Errors at a single (estimator, a) are recorded in the report
    rather than raised.  Reports are ordered by estimator, then by ``a``.
    """
    a_values = table.a_values if a_values is None else np.atleast_1d(np.asarray(a_values, dtype=float))
    unknown = set(estimators) - set(ESTIMATOR_IDS)
    if unknown:
        raise ValueError(f"unknown estimators {sorted(unknown)}")
    if "BINARY_STATE" in estimators:
        raise ValueError("BINARY_STATE is a contrast; use estimate_binary_state")
    discrete = table.grid is None
    if not discrete and kernel is None:
        raise ValueError("continuous estimation needs a kernel")
    z = _z(conf_level)
    w = data.w
    n = data.n
    cols = [table.eval_index(a) for a in a_values]
    wanted = list(dict.fromkeys("STATE_DR_ESTT" if (e == "STATE_DR" and not trim.is_fixed) else e for e in estimators))

    fixed_t = trim.t if trim.is_fixed else 0.0
    base, base_err = _robust_matrix(data, table, kernel, indicator, a_values, fixed_t, False, pi_floor)

    thresholds = None
    if "STATE_DR_ESTT" in wanted:
        if trim.is_fixed:
            raise ValueError("STATE_DR_ESTT needs a quantile TrimSpec")
        thresholds = estimate_thresholds(data, table, indicator, a_values, trim, kernel)
        t_hat = np.array([r.t_hat for r in thresholds])
        estt, estt_err = _robust_matrix(data, table, kernel, indicator, a_values, t_hat, True, pi_floor)

    reports = []
    for est in wanted:
        for j, a in enumerate(a_values):
            try:
                pi_a = table.pi_eval[:, cols[j]]
                if trim.is_fixed:
                    t_pi = trim.t
                elif est in ("PLUGIN_TRIM", "EIF_PLUGIN_TRIM"):
                    t_pi = quantile_plugin_threshold(pi_a, trim.gamma, w)
                if est == "PLUGIN_TRIM":
                    rep = _plugin_report(a, table.mu_eval[:, cols[j]], pi_a, t_pi, w, conf_level, discrete)
                elif est == "STATE_DR_ESTT":
                    if j in estt_err:
                        raise estt_err[j]
                    thr = thresholds[j]
                    if thr.boundary is not None:
                        raise BoundaryThreshold(
                            f"threshold search hit the {thr.boundary} end of the grid at a={a}",
                            thr.t_hat, thr.boundary,
                        )
                    rep = _state_estt_report(
                        a, estt["num"][:, j], estt["den"][:, j], estt["num_dt"][:, j], estt["den_dt"][:, j],
                        thr.t_hat, trim.gamma, w, z, conf_level, _eif_values(estt, j) if keep_eif else None,
                    )
                else:
                    if j in base_err:
                        raise base_err[j]
                    eif = _eif_values(base, j) if keep_eif else None
                    if est == "SATE_DR":
                        rep = _sate_report(a, base["sate"][:, j], w, z, conf_level, eif)
                    elif est == "EIF_PLUGIN_TRIM":
                        rep = _eif_plugin_report(a, base["sate"][:, j], pi_a, t_pi, w, z, conf_level, discrete)
                    else:
                        rep = _state_report(a, base["num"][:, j], base["den"][:, j], trim.t, w, z, conf_level, eif)
            except TrimcurveError as exc:
                rep = _failed(a, est, exc, n, conf_level)
            reports.append(rep)
    return reports


def _context_table(data: Dataset, ctx: EifContext, table: NuisanceTable | None) -> NuisanceTable:
    if table is not None:
        return table
    if ctx.model is None:
        raise ValueError("either a model in the context or a precomputed table is required")
    return tabulate(ctx.model, data, [ctx.a], ctx.grid)


def _single(data, ctx, table):
    table = _context_table(data, ctx, table)
    if table.grid is not None:
        mat = continuous_eif_matrix(data, table, ctx.kernel, ctx.indicator, [ctx.a], ctx.t, False, ctx.pi_floor)
    else:
        mat = discrete_eif_matrix(data, table, ctx.indicator, [ctx.a], ctx.t, False, ctx.pi_floor)
    return table, mat


# --------------------------------------------------------------------------
# single-point API


def estimate_sate_dr(data: Dataset, ctx: EifContext, table: NuisanceTable | None = None, conf_level=0.95) -> EstimateReport:
    """One-step kernel-smoothed ATE; ``ctx.t`` is ignored."""
    _, mat = _single(data, ctx, table)
    return _sate_report(ctx.a, mat["sate"][:, 0], data.w, _z(conf_level), conf_level, _eif_values(mat, 0))


def estimate_plugin_trim(data: Dataset, model, a: float, t: float, conf_level=0.95, inclusive=False) -> EstimateReport:
    """Mean of ``mu_hat(X, a)`` over units with ``pi_hat(a|X) > t``; no interval.

    ``model`` is a :class:`NuisanceModel` or a precomputed table containing ``a``.
    """
    if isinstance(model, NuisanceModel):
        table = tabulate(model, data, [a])
    else:
        table = model
    k = table.eval_index(a)
    return _plugin_report(a, table.mu_eval[:, k], table.pi_eval[:, k], t, data.w, conf_level, inclusive)


def estimate_eif_plugin_trim(data: Dataset, ctx: EifContext, table: NuisanceTable | None = None, conf_level=0.95) -> EstimateReport:
    """Mean of the smoothed-ATE influence values within the trimmed sample."""
    table, mat = _single(data, ctx, table)
    k = table.eval_index(ctx.a)
    return _eif_plugin_report(
        ctx.a, mat["sate"][:, 0], table.pi_eval[:, k], ctx.t, data.w, _z(conf_level), conf_level, table.grid is None,
    )


def estimate_state_fixed_t(data: Dataset, ctx: EifContext, table: NuisanceTable | None = None, conf_level=0.95) -> EstimateReport:
    """Ratio of one-step numerator and denominator estimates at fixed ``t``."""
    _, mat = _single(data, ctx, table)
    return _state_report(
        ctx.a, mat["num"][:, 0], mat["den"][:, 0], ctx.t, data.w, _z(conf_level), conf_level, _eif_values(mat, 0),
    )


def estimate_threshold(data: Dataset, ctx: EifContext, gamma: float, t_grid=None, table: NuisanceTable | None = None) -> ThresholdResult:
    """Line search for the smallest grid ``t`` with estimated denominator at
    most ``1 - gamma``.  Boundary hits are reported in ``boundary``, not raised."""
    table = _context_table(data, ctx, table)
    t_grid = TrimSpec.quantile(gamma).t_grid if t_grid is None else np.asarray(t_grid, dtype=float)
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    path = den_paths(data, table, ctx.indicator, [ctx.a], t_grid, ctx.kernel)[0]
    return select_threshold(path, t_grid, gamma, ctx.a)


def estimate_state_estimated_t(
    data: Dataset, ctx: EifContext, gamma: float, t_grid=None, table: NuisanceTable | None = None, conf_level=0.95
) -> EstimateReport:
    """Trimmed effect at the line-searched threshold, with the interval that
    accounts for estimating it."""
    table = _context_table(data, ctx, table)
    thr = estimate_threshold(data, ctx, gamma, t_grid, table)
    if thr.boundary is not None:
        raise BoundaryThreshold(
            f"threshold search hit the {thr.boundary} end of the grid at a={ctx.a}", thr.t_hat, thr.boundary
        )
    mat = _eif_matrix(data, table, ctx.kernel, ctx.indicator, [ctx.a], thr.t_hat, True, ctx.pi_floor)
    return _state_estt_report(
        ctx.a, mat["num"][:, 0], mat["den"][:, 0], mat["num_dt"][:, 0], mat["den_dt"][:, 0],
        thr.t_hat, gamma, data.w, _z(conf_level), conf_level, _eif_values(mat, 0),
    )


# --------------------------------------------------------------------------
# binary contrast


def binary_contrast_eifs(data: Dataset, table: NuisanceTable, indicator: IndicatorConfig, t: float, pi_floor=PI_FLOOR):
    """Per-unit numerator and denominator influence values of the two-sided
    trimmed contrast ``E[mu(X,1) - mu(X,0) | t < pi(1|X) < 1 - t]`` (smoothed)."""
    from .influence import eif_binary_contrast_den, eif_binary_contrast_num

    ctx = EifContext(None, None, indicator, None, 1.0, t, pi_floor)
    return eif_binary_contrast_num(data, ctx, table), eif_binary_contrast_den(data, ctx, table)


def estimate_binary_state(
    data: Dataset, table: NuisanceTable, indicator: IndicatorConfig, t: float, conf_level=0.95, pi_floor=PI_FLOOR
) -> EstimateReport:
    phi_num, phi_den = binary_contrast_eifs(data, table, indicator, t, pi_floor)
    rep = _state_report(1.0, phi_num, phi_den, t, data.w, _z(conf_level), conf_level)
    return replace(rep, estimator_id="BINARY_STATE")


def binary_plugin_share(table: NuisanceTable, indicator: IndicatorConfig, t: float, w) -> float:
    """Smoothed share of units kept by two-sided trimming."""
    p1 = table.pi_eval[:, table.eval_index(1.0)]
    return float(weighted_mean(smooth_indicator_two_sided(p1, t, indicator), w))


# --------------------------------------------------------------------------
# cross-fitting


@dataclass(frozen=True, eq=False)
class CrossfitPlan:
    k_folds: int
    fold_assignment: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        folds = np.asarray(self.fold_assignment, dtype=np.intp)
        if self.k_folds < 2:
            raise ValueError("cross-fitting needs at least 2 folds")
        if folds.ndim != 1 or folds.min(initial=0) < 0 or folds.max(initial=0) >= self.k_folds:
            raise ValueError("fold ids must lie in 0..k_folds-1")
        counts = np.bincount(folds, minlength=self.k_folds)
        if np.any(counts == 0):
            raise FoldTooSmall(f"fold sizes {counts.tolist()} include an empty fold")
        folds.setflags(write=False)
        object.__setattr__(self, "fold_assignment", folds)

    @classmethod
    def make(cls, n: int, k_folds: int = 2, seed: int = 0) -> "CrossfitPlan":
        """Seeded shuffle split into ``k_folds`` folds of (almost) equal size."""
        if n < k_folds:
            raise FoldTooSmall(f"{n} units cannot fill {k_folds} folds")
        perm = np.random.default_rng(seed).permutation(n)
        folds = np.empty(n, dtype=np.intp)
        folds[perm] = np.arange(n) % k_folds
        return cls(k_folds, folds, seed)

    def fold_indices(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_assignment == k)


def crossfit_table(data: Dataset, plan: CrossfitPlan, fit_recipe, a_values, grid: QuadratureGrid | None = None) -> NuisanceTable:
    """Nuisance table where each unit's values come from a model fit
    without its fold."""
    if plan.fold_assignment.size != data.n:
        raise ValueError("plan and dataset sizes differ")
    parts, indices = [], []
    for k in range(plan.k_folds):
        idx = plan.fold_indices(k)
        train = np.flatnonzero(plan.fold_assignment != k)
        try:
            model = fit_recipe(data.subset(train))
        except ValueError as exc:
            raise FoldTooSmall(f"fitting on the complement of fold {k} ({train.size} units) failed: {exc}") from exc
        parts.append(tabulate(model, data.subset(idx), a_values, grid, units=idx))
        indices.append(idx)
    return NuisanceTable.stitch(parts, indices, data.n)


def crossfit_estimate(
    data: Dataset,
    plan: CrossfitPlan,
    fit_recipe,
    indicator: IndicatorConfig,
    trim: TrimSpec,
    a_values,
    kernel: KernelConfig | None = None,
    grid: QuadratureGrid | None = None,
    estimators=("STATE_DR",),
    conf_level: float = 0.95,
) -> list[EstimateReport]:
    """Cross-fit nuisances, then run :func:`estimate_curve` on the pooled
    influence values exactly as for a single sample."""
    table = crossfit_table(data, plan, fit_recipe, a_values, grid)
    return estimate_curve(data, table, indicator, trim, kernel, a_values, estimators, conf_level)


# --------------------------------------------------------------------------
# trimmed-population diagnostic


@dataclass(frozen=True, eq=False)
class ProfileCurve:
    """Kernel-smoothed covariate means before and after (smoothed) trimming.
    ``missing`` marks evaluation points with zero total weight (values NaN)."""

    a_values: np.ndarray
    covariate_index: int
    untrimmed: np.ndarray
    trimmed: np.ndarray
    t: np.ndarray
    missing: np.ndarray = field(default=None)


def trimmed_population_profile(
    data: Dataset,
    table: NuisanceTable,
    kernel: KernelConfig,
    indicator: IndicatorConfig,
    t,
    covariate_index: int = 0,
    a_values=None,
) -> ProfileCurve:
    if not 0 <= covariate_index < data.p:
        raise ValueError(f"covariate index {covariate_index} out of range for {data.p} covariates")
    a_values = table.a_values if a_values is None else np.atleast_1d(np.asarray(a_values, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), a_values.shape).copy()
    cols = [table.eval_index(a) for a in a_values]
    x = data.x[:, covariate_index]
    kw = kernel_weight(data.a[:, None] - a_values[None, :], kernel) * data.w[:, None]
    sw = kw * smooth_indicator(table.pi_eval[:, cols], t[None, :], indicator)
    tot_k = kw.sum(axis=0)
    tot_s = sw.sum(axis=0)
    missing = ~(tot_k > 0) | ~(tot_s > 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        untrimmed = np.where(tot_k > 0, x @ kw / tot_k, np.nan)
        trimmed = np.where(tot_s > 0, x @ sw / tot_s, np.nan)
    return ProfileCurve(a_values, covariate_index, untrimmed, trimmed, t, missing)
