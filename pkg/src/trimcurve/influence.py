"""Uncentered efficient influence functions, evaluated per unit.

Continuous-treatment functions share one pass of grid integrals
(:func:`trimcurve.kernels.grid_integrals`) so numerator and denominator see
the same discretisation.  All functions accept a :class:`~trimcurve.data.Dataset`
of any size; a single record is a one-row dataset.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import DegenerateTrimmedPopulation, NonpositivePropensity, UnsupportedIndicator
from .kernels import BASE_TERMS, DT_TERMS, grid_integrals
from .nuisance import NuisanceModel, NuisanceTable, tabulate
from .smoothing import (
    IndicatorConfig,
    KernelConfig,
    QuadratureGrid,
    kernel_weight,
    kernel_weight_matrix,
    smooth_indicator,
    smooth_indicator_dpi,
    smooth_indicator_dpi_dt,
    smooth_indicator_two_sided,
    smooth_indicator_two_sided_dpi,
)

PI_FLOOR = 1e-12
ANALYTIC_DT_FAMILIES = ("normal_cdf",)


@dataclass(frozen=True)
class EifContext:
    """Everything needed to evaluate the influence functions at ``(a, t)``.

    ``grid`` may be ``None`` for the discrete-treatment functions, which do
    not integrate over treatment values.
    """

    model: NuisanceModel | None
    kernel: KernelConfig | None
    indicator: IndicatorConfig
    grid: QuadratureGrid | None
    a: float
    t: float
    pi_floor: float = PI_FLOOR

    def __post_init__(self):
        if not np.isfinite(self.a) or not np.isfinite(self.t):
            raise ValueError("a and t must be finite")
        if self.grid is not None and self.kernel is not None and not self.grid.spans(self.a, 5 * self.kernel.h):
            raise ValueError(f"quadrature grid must extend 5h beyond a={self.a} on both sides")

    def with_t(self, t) -> "EifContext":
        return EifContext(self.model, self.kernel, self.indicator, self.grid, self.a, float(t), self.pi_floor)

    def with_a(self, a) -> "EifContext":
        return EifContext(self.model, self.kernel, self.indicator, self.grid, float(a), self.t, self.pi_floor)


@dataclass(frozen=True, eq=False)
class EifValues:
    phi_num: np.ndarray
    phi_den: np.ndarray
    phi_sate: np.ndarray
    phi_num_dt: np.ndarray | None = None
    phi_den_dt: np.ndarray | None = None

    def __len__(self):
        return self.phi_num.size


def _require_analytic_dt(indicator: IndicatorConfig):
    if indicator.family not in ANALYTIC_DT_FAMILIES:
        raise UnsupportedIndicator(
            f"no analytic t-derivative for indicator family {indicator.family!r}; "
            "use eif_dt_finite_difference instead"
        )


def check_floor(pi, active, floor, offset=0):
    """Raise :class:`NonpositivePropensity` for the first active unit at or below the floor."""
    bad = active & ~(pi > floor)
    if np.any(bad):
        rows = np.flatnonzero(bad.any(axis=1) if bad.ndim == 2 else bad)
        unit = rows[0]
        value = pi[unit] if np.ndim(pi) == 1 else np.min(pi[unit])
        raise NonpositivePropensity(unit + offset, value, floor)


def _safe_ratio(num, den, active):
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=np.broadcast_to(active, out.shape))
    return out


def continuous_eif_matrix(
    data: Dataset,
    table: NuisanceTable,
    kernel: KernelConfig,
    indicator: IndicatorConfig,
    a_values,
    t,
    with_dt: bool = False,
    pi_floor: float = PI_FLOOR,
) -> dict:
    """All continuous-treatment influence functions at several evaluation points.

    ``t`` is a scalar or one threshold per evaluation point.  Returns a dict
    of (n, m) arrays keyed ``sate``, ``num``, ``den`` (and ``num_dt``,
    ``den_dt``), plus ``kernel_obs``, the kernel weights at the observed
    treatments, and ``k_mass``, the per-unit quadrature mass of the kernel.
    """
    if table.grid is None:
        raise ValueError("continuous influence functions need a tabulated quadrature grid")
    if with_dt:
        _require_analytic_dt(indicator)
    a_values = np.atleast_1d(np.asarray(a_values, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), a_values.shape)
    kw = kernel_weight_matrix(table.grid, a_values, kernel)
    ints = grid_integrals(kw, table.pi_grid, table.mu_grid, t, indicator.epsilon, with_dt)
    names = BASE_TERMS + (DT_TERMS if with_dt else ())
    I = dict(zip(names, ints))

    k_obs = kernel_weight(data.a[:, None] - a_values[None, :], kernel)
    active = k_obs != 0
    pi_obs = table.pi_obs[:, None]
    check_floor(np.broadcast_to(pi_obs, k_obs.shape), active, pi_floor)
    resid = (data.y - table.mu_obs)[:, None]
    mu_obs = table.mu_obs[:, None]
    ipw = _safe_ratio(k_obs * resid, pi_obs, active)

    s_obs = smooth_indicator(pi_obs, t[None, :], indicator)
    d_obs = smooth_indicator_dpi(pi_obs, t[None, :], indicator)

    out = {
        "kernel_obs": k_obs,
        "k_mass": I["k"],
        "sate": ipw + I["mu"],
        "num": ipw * s_obs + I["s_mu"] + k_obs * mu_obs * d_obs - I["d_pi_mu"],
        "den": I["s"] + k_obs * d_obs - I["d_pi"],
    }
    if with_dt:
        d2_obs = smooth_indicator_dpi_dt(pi_obs, t[None, :], indicator)
        out["num_dt"] = -ipw * d_obs - I["d_mu"] + k_obs * mu_obs * d2_obs - I["d2_pi_mu"]
        out["den_dt"] = -I["d"] + k_obs * d2_obs - I["d2_pi"]
    return out


def _table_for(data: Dataset, ctx: EifContext, table: NuisanceTable | None) -> NuisanceTable:
    if table is not None:
        return table
    if ctx.model is None:
        raise ValueError("either a model in the context or a precomputed table is required")
    return tabulate(ctx.model, data, [ctx.a], ctx.grid)


def compute_eifs(data: Dataset, ctx: EifContext, table: NuisanceTable | None = None, with_dt: bool = True) -> EifValues:
    table = _table_for(data, ctx, table)
    m = continuous_eif_matrix(data, table, ctx.kernel, ctx.indicator, [ctx.a], ctx.t, with_dt, ctx.pi_floor)
    return EifValues(
        phi_num=m["num"][:, 0],
        phi_den=m["den"][:, 0],
        phi_sate=m["sate"][:, 0],
        phi_num_dt=m["num_dt"][:, 0] if with_dt else None,
        phi_den_dt=m["den_dt"][:, 0] if with_dt else None,
    )


def eif_sate(data: Dataset, ctx: EifContext, table: NuisanceTable | None = None) -> np.ndarray:
    """Smoothed-ATE influence values: inverse-weighted residual plus the
    kernel-smoothed regression integral."""
    return compute_eifs(data, ctx, table, with_dt=False).phi_sate


def eif_num(data: Dataset, ctx: EifContext, table: NuisanceTable | None = None) -> np.ndarray:
    return compute_eifs(data, ctx, table, with_dt=False).phi_num


def eif_den(data: Dataset, ctx: EifContext, table: NuisanceTable | None = None) -> np.ndarray:
    return compute_eifs(data, ctx, table, with_dt=False).phi_den


def eif_num_dt(data: Dataset, ctx: EifContext, table: NuisanceTable | None = None) -> np.ndarray:
    return compute_eifs(data, ctx, table, with_dt=True).phi_num_dt


def eif_den_dt(data: Dataset, ctx: EifContext, table: NuisanceTable | None = None) -> np.ndarray:
    return compute_eifs(data, ctx, table, with_dt=True).phi_den_dt


def eif_dt_finite_difference(data: Dataset, ctx: EifContext, table: NuisanceTable | None = None, step=None):
    """Central differences in ``t`` of the numerator and denominator
    influence values; the fallback for indicator families without analytic
    derivatives.  Default step is ``1e-4 * epsilon``."""
    table = _table_for(data, ctx, table)
    step = 1e-4 * ctx.indicator.epsilon if step is None else step
    hi = compute_eifs(data, ctx.with_t(ctx.t + step), table, with_dt=False)
    lo = compute_eifs(data, ctx.with_t(ctx.t - step), table, with_dt=False)
    return (hi.phi_num - lo.phi_num) / (2 * step), (hi.phi_den - lo.phi_den) / (2 * step)


def eif_ratio(data: Dataset, ctx: EifContext, psi_den: float, psi: float, table: NuisanceTable | None = None) -> np.ndarray:
    """Centered influence function of the trimmed ratio itself.

    Evaluated directly from its three-term form rather than from the
    numerator and denominator influence values.
    """
    if not psi_den > 0:
        raise DegenerateTrimmedPopulation(f"denominator {psi_den} is not positive")
    table = _table_for(data, ctx, table)
    ind = ctx.indicator
    k_obs = kernel_weight(data.a - ctx.a, ctx.kernel)
    active = k_obs != 0
    check_floor(table.pi_obs, active, ctx.pi_floor)
    s_obs = smooth_indicator(table.pi_obs, ctx.t, ind)
    d_obs = smooth_indicator_dpi(table.pi_obs, ctx.t, ind)
    ipw = _safe_ratio(k_obs * (data.y - table.mu_obs) * s_obs, table.pi_obs, active)
    kw = kernel_weight(ctx.grid.points - ctx.a, ctx.kernel) * ctx.grid.weights
    pg = table.pi_grid
    inner = (smooth_indicator(pg, ctx.t, ind) - smooth_indicator_dpi(pg, ctx.t, ind) * pg) * (table.mu_grid - psi)
    return (ipw + k_obs * d_obs * (table.mu_obs - psi) + inner @ kw) / psi_den


# --------------------------------------------------------------------------
# discrete and binary treatments


def discrete_eif_matrix(
    data: Dataset,
    table: NuisanceTable,
    indicator: IndicatorConfig,
    a_values,
    t,
    with_dt: bool = False,
    pi_floor: float = PI_FLOOR,
) -> dict:
    """Discrete-treatment counterpart of :func:`continuous_eif_matrix`.

    ``1(A = a)`` replaces the kernel and every integral collapses to a point
    evaluation at ``a``.  ``sate`` holds the untrimmed augmented IPW score.
    """
    if with_dt:
        _require_analytic_dt(indicator)
    a_values = np.atleast_1d(np.asarray(a_values, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), a_values.shape)[None, :]
    cols = [table.eval_index(a) for a in a_values]
    pa = table.pi_eval[:, cols]
    mua = table.mu_eval[:, cols]
    hit = (data.a[:, None] == a_values[None, :]).astype(float)
    check_floor(pa, hit != 0, pi_floor)
    ipw = _safe_ratio(hit * (data.y[:, None] - mua), pa, hit != 0)
    s = smooth_indicator(pa, t, indicator)
    d = smooth_indicator_dpi(pa, t, indicator)
    out = {
        "kernel_obs": hit,
        "k_mass": np.ones_like(pa),
        "sate": ipw + mua,
        "num": ipw * s + s * mua + hit * mua * d - mua * d * pa,
        "den": s + hit * d - d * pa,
    }
    if with_dt:
        d2 = smooth_indicator_dpi_dt(pa, t, indicator)
        out["num_dt"] = -ipw * d - d * mua + hit * mua * d2 - mua * d2 * pa
        out["den_dt"] = -d + hit * d2 - d2 * pa
    return out


def _discrete_parts(data: Dataset, ctx: EifContext, table: NuisanceTable | None):
    table = table if table is not None else tabulate(ctx.model, data, [ctx.a])
    k = table.eval_index(ctx.a)
    pa = table.pi_eval[:, k]
    mua = table.mu_eval[:, k]
    hit = data.a == ctx.a
    check_floor(pa, hit, ctx.pi_floor)
    return hit, pa, mua


def eif_num_discrete(data: Dataset, ctx: EifContext, table: NuisanceTable | None = None) -> np.ndarray:
    hit, pa, mua = _discrete_parts(data, ctx, table)
    s = smooth_indicator(pa, ctx.t, ctx.indicator)
    d = smooth_indicator_dpi(pa, ctx.t, ctx.indicator)
    ipw = _safe_ratio((data.y - mua) * s, pa, hit)
    return ipw + s * mua + hit * mua * d - mua * d * pa


def eif_den_discrete(data: Dataset, ctx: EifContext, table: NuisanceTable | None = None) -> np.ndarray:
    hit, pa, _ = _discrete_parts(data, ctx, table)
    s = smooth_indicator(pa, ctx.t, ctx.indicator)
    d = smooth_indicator_dpi(pa, ctx.t, ctx.indicator)
    return s + hit * d - d * pa


def eif_aipw_discrete(data: Dataset, ctx: EifContext, table: NuisanceTable | None = None) -> np.ndarray:
    """Untrimmed augmented IPW score ``1(A=a)(Y - mu)/pi + mu(X, a)``."""
    hit, pa, mua = _discrete_parts(data, ctx, table)
    return _safe_ratio(data.y - mua, pa, hit) + mua


def _binary_parts(data: Dataset, ctx: EifContext, table: NuisanceTable | None):
    if not np.all((data.a == 0) | (data.a == 1)):
        raise ValueError("binary contrast needs treatments coded 0/1")
    table = table if table is not None else tabulate(ctx.model, data, [0.0, 1.0])
    i1, i0 = table.eval_index(1.0), table.eval_index(0.0)
    p1 = table.pi_eval[:, i1]
    treated = data.a == 1
    check_floor(p1, treated, ctx.pi_floor)
    check_floor(1.0 - p1, ~treated, ctx.pi_floor)
    s = smooth_indicator_two_sided(p1, ctx.t, ctx.indicator)
    d = smooth_indicator_two_sided_dpi(p1, ctx.t, ctx.indicator)
    return treated, p1, table.mu_eval[:, i1], table.mu_eval[:, i0], s, d


def eif_binary_contrast_num(data: Dataset, ctx: EifContext, table: NuisanceTable | None = None) -> np.ndarray:
    treated, p1, mu1, mu0, s, d = _binary_parts(data, ctx, table)
    contrast = mu1 - mu0
    resid = _safe_ratio(data.y - mu1, p1, treated) - _safe_ratio(data.y - mu0, 1.0 - p1, ~treated)
    return s * contrast + d * (data.a - p1) * contrast + s * resid


def eif_binary_contrast_den(data: Dataset, ctx: EifContext, table: NuisanceTable | None = None) -> np.ndarray:
    _, p1, _, _, s, d = _binary_parts(data, ctx, table)
    return s + d * (data.a - p1)
