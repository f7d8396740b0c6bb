"""Truth oracles and the Monte-Carlo experiment runner.

Truths are plug-in Monte-Carlo averages over simulated covariates with the
true nuisance functions.  Experiments draw a dataset per replication, perturb
the true nuisances at each rate ``alpha`` and score every estimator against
its own target.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import __version__
from .dgp import DGPSpec, generate_dataset, make_true_model
from .estimators import (
    CURVE_ESTIMATORS,
    TrimSpec,
    estimate_curve,
    quantile_plugin_threshold,
    weighted_mean,
)
from .influence import continuous_eif_matrix
from .kernels import BASE_TERMS, DT_TERMS, grid_integrals
from .nuisance import SyntheticNoiseSpec, make_noisy_model, tabulate
from .smoothing import IndicatorConfig, KernelConfig, QuadratureGrid, default_step, kernel_weight_matrix, smooth_indicator

CACHE_ENV = "TRIMCURVE_CACHE"
TRUTH_FORMAT = 1
NOISE_STEP = 0.05


def simulation_grid(h: float, epsilon: float, lo: float = -0.5, hi: float = 1.5, step: float | None = None) -> QuadratureGrid:
    """Quadrature grid used by the simulations: ``[lo, hi]`` at
    :func:`~trimcurve.smoothing.default_step`."""
    return QuadratureGrid.uniform(lo, hi, default_step(h, epsilon) if step is None else step)


def noise_nodes(lo: float = -0.5, hi: float = 1.5, step: float = NOISE_STEP) -> np.ndarray:
    """Treatment nodes on which synthetic nuisance disturbances are drawn."""
    return np.round(lo + step * np.arange(int(round((hi - lo) / step)) + 1), 12)


def _child_seed(*key) -> int:
    return int(np.random.SeedSequence([int(k) for k in key]).generate_state(1)[0])


# --------------------------------------------------------------------------
# truth oracle


@dataclass(frozen=True, eq=False)
class TruthTable:
    """Per-``a`` true estimands and their Monte-Carlo standard errors.

    ``sate`` is the kernel-smoothed mean outcome, ``tate`` the sharply
    trimmed mean at ``t_tate`` and ``state`` the smoothed trimmed mean at
    ``t_state`` (with ``state_num``/``state_den`` its two parts).  For a
    fixed threshold both ``t`` arrays hold that value; under quantile
    trimming ``t_tate`` is the propensity quantile and ``t_state`` solves
    ``state_den = 1 - gamma``.  ``p_a`` is the marginal treatment density
    (probability for discrete treatments) at each ``a``.
    """

    a_values: np.ndarray
    sate: np.ndarray
    tate: np.ndarray
    state: np.ndarray
    state_num: np.ndarray
    state_den: np.ndarray
    t_tate: np.ndarray
    t_state: np.ndarray
    p_a: np.ndarray
    sate_se: np.ndarray
    tate_se: np.ndarray
    state_se: np.ndarray
    state_num_se: np.ndarray
    t_state_se: np.ndarray
    mc_n: int
    seed: int

    def target(self, estimator_id: str) -> np.ndarray:
        """The estimand each estimator is scored against."""
        if estimator_id == "SATE_DR":
            return self.sate
        if estimator_id in ("PLUGIN_TRIM", "EIF_PLUGIN_TRIM"):
            return self.tate
        if estimator_id in ("STATE_DR", "STATE_DR_ESTT"):
            return self.state
        raise KeyError(f"no target for estimator {estimator_id!r}")

    def target_se(self, estimator_id: str) -> np.ndarray:
        return {"SATE_DR": self.sate_se, "PLUGIN_TRIM": self.tate_se, "EIF_PLUGIN_TRIM": self.tate_se}.get(
            estimator_id, self.state_se
        )

    def to_npz(self, path) -> None:
        np.savez(path, **{k: np.asarray(v) for k, v in asdict(self).items()})

    @classmethod
    def from_npz(cls, path) -> "TruthTable":
        with np.load(path) as z:
            kw = {k: z[k] for k in z.files}
        kw["mc_n"] = int(kw["mc_n"])
        kw["seed"] = int(kw["seed"])
        return cls(**kw)


def _ratio_se(num_i, den_i):
    """Delta-method standard error of ``mean(num) / mean(den)``."""
    n = num_i.size
    r = num_i.mean() / den_i.mean()
    return float(np.std(num_i - r * den_i, ddof=1) / den_i.mean() / np.sqrt(n))


def _sharp_trim(mu_a, pi_a, t, inclusive):
    keep = (pi_a >= t) if inclusive else (pi_a > t)
    if not np.any(keep):
        return float("nan"), float("nan")
    k = keep.astype(float)
    return float((mu_a * k).sum() / k.sum()), _ratio_se(mu_a * k, k)


def _truth_key(dgp, trim, kernel, indicator, a_values, mc_n, seed, grid):
    payload = {
        "format": TRUTH_FORMAT,
        "version": __version__,
        "dgp": asdict(dgp),
        "trim": asdict(trim),
        "h": kernel.h if kernel else None,
        "epsilon": indicator.epsilon,
        "a": [float(a) for a in a_values],
        "mc_n": int(mc_n),
        "seed": int(seed),
        "grid": None if grid is None else [float(grid.points[0]), float(grid.points[-1]), grid.size],
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:24]


def compute_truth(
    dgp: DGPSpec,
    trim: TrimSpec,
    indicator: IndicatorConfig,
    kernel: KernelConfig | None = None,
    a_values=None,
    mc_n: int = 100_000,
    seed: int = 20240601,
    grid: QuadratureGrid | None = None,
    cache_dir=None,
    chunk: int = 25_000,
) -> TruthTable:
    """Monte-Carlo truth table with true nuisances.

    Continuous treatments integrate over ``grid`` (default
    :func:`simulation_grid`), the same grid the estimators use.  Results are
    cached under ``cache_dir`` (default: the ``TRIMCURVE_CACHE`` directory,
    no caching when unset).
    """
    if mc_n < 10_000:
        raise ValueError("truth oracles need mc_n >= 1e4")
    if a_values is None:
        a_values = [1.0] if dgp.binary else np.round(np.arange(21) * 0.05, 10)
    a_values = np.atleast_1d(np.asarray(a_values, dtype=float))
    if not dgp.binary:
        if kernel is None:
            raise ValueError("continuous truths need a kernel")
        grid = simulation_grid(kernel.h, indicator.epsilon) if grid is None else grid
    cache_dir = os.environ.get(CACHE_ENV) if cache_dir is None else cache_dir
    path = None
    if cache_dir:
        key = _truth_key(dgp, trim, kernel, indicator, a_values, mc_n, seed, grid)
        path = Path(cache_dir) / f"truth-{key}.npz"
        if path.exists():
            return TruthTable.from_npz(path)
    if dgp.binary:
        table = _binary_truth(dgp, trim, indicator, a_values, mc_n, seed)
    else:
        table = _continuous_truth(dgp, trim, kernel, indicator, a_values, mc_n, seed, grid, chunk)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp.npz")
        table.to_npz(tmp)
        os.replace(tmp, path)
    return table


def _continuous_truth(dgp, trim, kernel, indicator, a_values, mc_n, seed, grid, chunk):
    model = make_true_model(dgp)
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, mc_n)[:, None]
    m = a_values.size
    kw = kernel_weight_matrix(grid, a_values, kernel)
    pi_a = model.pi(np.broadcast_to(a_values, (mc_n, m)), x)
    mu_a = model.mu(x, np.broadcast_to(a_values, (mc_n, m)))
    pg = np.empty((mc_n, grid.size))
    mg = np.empty((mc_n, grid.size))
    for lo in range(0, mc_n, chunk):
        xs = x[lo:lo + chunk]
        nodes = np.broadcast_to(grid.points, (xs.shape[0], grid.size))
        pg[lo:lo + chunk] = model.pi(nodes, xs)
        mg[lo:lo + chunk] = model.mu(xs, nodes)

    def sweep(t_cols, cols=None):
        """Per-unit integrals (rows ``BASE_TERMS + DT_TERMS``) for columns ``cols``."""
        cols = np.arange(m) if cols is None else np.atleast_1d(cols)
        return grid_integrals(kw[:, cols], pg, mg, t_cols, indicator.epsilon, True)

    if trim.is_fixed:
        t_state = np.full(m, trim.t)
        t_tate = np.full(m, trim.t)
        t_state_se = np.zeros(m)
    else:
        t_tate = np.array([quantile_plugin_threshold(pi_a[:, j], trim.gamma) for j in range(m)])
        t_state, t_state_se = _solve_t0(sweep, trim, m, mc_n)

    k_i, mu_i, s_i, smu_i = sweep(t_state)[:4]
    sate = mu_i.mean(axis=0)
    sate_se = mu_i.std(axis=0, ddof=1) / np.sqrt(mc_n)
    num = smu_i.mean(axis=0)
    den = s_i.mean(axis=0)
    state_se = np.array([_ratio_se(smu_i[:, j], s_i[:, j]) for j in range(m)])
    num_se = smu_i.std(axis=0, ddof=1) / np.sqrt(mc_n)
    tate = np.empty(m)
    tate_se = np.empty(m)
    for j in range(m):
        tate[j], tate_se[j] = _sharp_trim(mu_a[:, j], pi_a[:, j], t_tate[j], inclusive=False)
    p_a = pi_a.mean(axis=0)
    return TruthTable(
        a_values, sate, tate, num / den, num, den, t_tate, t_state, p_a,
        sate_se, tate_se, state_se, num_se, t_state_se, int(mc_n), int(seed),
    )


def _solve_t0(sweep, trim, m, mc_n):
    """Root of the oracle denominator ``= 1 - gamma`` per ``a`` by Brent's
    method; the grid end is returned when there is no sign change."""
    target = 1.0 - trim.gamma
    t_state = np.empty(m)
    t_se = np.empty(m)
    s_row, d_row = BASE_TERMS.index("s"), len(BASE_TERMS) + DT_TERMS.index("d")
    for j in range(m):
        def f(t, j=j):
            return sweep(np.array([t]), j)[s_row, :, 0].mean() - target

        if f(trim.t_min) <= 0:
            t0 = trim.t_min
        elif f(trim.t_max) > 0:
            t0 = trim.t_max
        else:
            t0 = brentq(f, trim.t_min, trim.t_max, xtol=1e-10, rtol=1e-12)
        ints = sweep(np.array([t0]), j)
        slope = ints[d_row, :, 0].mean()  # minus the derivative of the denominator in t
        t_state[j] = t0
        # delta method: se of the denominator at t0 over its slope
        t_se[j] = float(np.std(ints[s_row, :, 0], ddof=1) / np.sqrt(mc_n) / slope) if slope > 0 else float("inf")
    return t_state, t_se


def _binary_truth(dgp, trim, indicator, a_values, mc_n, seed):
    model = make_true_model(dgp)
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, mc_n)[:, None]
    m = a_values.size
    pi_a = model.pi(np.broadcast_to(a_values, (mc_n, m)), x)
    mu_a = model.mu(x, np.broadcast_to(a_values, (mc_n, m)))
    out = {k: np.empty(m) for k in ("sate", "tate", "state", "num", "den", "t_tate", "t_state",
                                     "sate_se", "tate_se", "state_se", "num_se", "t_state_se")}
    for j in range(m):
        p, mu = pi_a[:, j], mu_a[:, j]
        if trim.is_fixed:
            t_s = t_p = trim.t
            t_se = 0.0
        else:
            t_p = quantile_plugin_threshold(p, trim.gamma)
            target = 1.0 - trim.gamma

            def f(t):
                return smooth_indicator(p, t, indicator).mean() - target

            if f(trim.t_min) <= 0:
                t_s = trim.t_min
            elif f(trim.t_max) > 0:
                t_s = trim.t_max
            else:
                t_s = brentq(f, trim.t_min, trim.t_max, xtol=1e-12)
            zz = (p - t_s) / indicator.epsilon
            slope = -np.mean(np.exp(-0.5 * zz * zz)) / np.sqrt(2 * np.pi) / indicator.epsilon
            s_units = smooth_indicator(p, t_s, indicator)
            t_se = float(np.std(s_units, ddof=1) / np.sqrt(mc_n) / abs(slope)) if slope != 0 else float("inf")
        s = smooth_indicator(p, t_s, indicator)
        out["sate"][j] = mu.mean()
        out["sate_se"][j] = mu.std(ddof=1) / np.sqrt(mc_n)
        out["num"][j] = (s * mu).mean()
        out["num_se"][j] = (s * mu).std(ddof=1) / np.sqrt(mc_n)
        out["den"][j] = s.mean()
        out["state"][j] = out["num"][j] / out["den"][j]
        out["state_se"][j] = _ratio_se(s * mu, s)
        out["tate"][j], out["tate_se"][j] = _sharp_trim(mu, p, t_p, inclusive=True)
        out["t_tate"][j] = t_p
        out["t_state"][j] = t_s
        out["t_state_se"][j] = t_se
    p_a = pi_a.mean(axis=0)
    return TruthTable(
        a_values, out["sate"], out["tate"], out["state"], out["num"], out["den"], out["t_tate"],
        out["t_state"], p_a, out["sate_se"], out["tate_se"], out["state_se"], out["num_se"],
        out["t_state_se"], int(mc_n), int(seed),
    )


def binary_contrast_truth(dgp: DGPSpec, indicator: IndicatorConfig, t: float, mc_n: int = 100_000, seed: int = 20240601):
    """Smoothed two-sided trimmed contrast ``E[S (mu1 - mu0)] / E[S]`` and its MC se."""
    from .smoothing import smooth_indicator_two_sided

    model = make_true_model(dgp)
    x = np.random.default_rng(seed).uniform(0.0, 1.0, mc_n)[:, None]
    p1 = model.pi(np.ones(mc_n), x)
    diff = model.mu(x, np.ones(mc_n)) - model.mu(x, np.zeros(mc_n))
    s = smooth_indicator_two_sided(p1, t, indicator)
    return float((s * diff).mean() / s.mean()), _ratio_se(s * diff, s)


# --------------------------------------------------------------------------
# experiments


@dataclass(frozen=True)
class ExperimentConfig:
    """One Monte-Carlo study.

    ``alphas`` may include ``inf`` for replications that use the true
    nuisances unperturbed.
    """

    dgp: DGPSpec = field(default_factory=DGPSpec)
    reps: int = 200
    alphas: tuple = (0.1, 0.2, 0.3, 0.4, 0.5)
    a_grid: tuple = tuple(np.round(np.arange(21) * 0.05, 10))
    trim: TrimSpec = field(default_factory=lambda: TrimSpec.fixed(0.1))
    h: float = 0.1
    epsilon: float = 0.01
    conf_level: float = 0.95
    master_seed: int = 0
    estimators: tuple = CURVE_ESTIMATORS
    truth_mc_n: int = 100_000
    truth_seed: int = 20240601
    grid_step: float | None = None

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if len(self.alphas) == 0 or len(self.a_grid) == 0:
            raise ValueError("alphas and a_grid must be nonempty")
        for alpha in self.alphas:
            if not (alpha == float("inf") or 0 < alpha <= 0.5):
                raise ValueError(f"alpha must lie in (0, 0.5] or be inf, got {alpha}")

    @property
    def kernel(self) -> KernelConfig:
        return KernelConfig(self.h)

    @property
    def indicator(self) -> IndicatorConfig:
        return IndicatorConfig(self.epsilon)

    @property
    def grid(self) -> QuadratureGrid:
        return simulation_grid(self.h, self.epsilon, step=self.grid_step)

    @property
    def a_values(self) -> np.ndarray:
        return np.asarray(self.a_grid, dtype=float)

    @property
    def estimator_ids(self) -> tuple:
        """Estimators as they are reported (``STATE_DR`` becomes
        ``STATE_DR_ESTT`` under quantile trimming)."""
        out = []
        for e in self.estimators:
            out.append("STATE_DR_ESTT" if (e == "STATE_DR" and not self.trim.is_fixed) else e)
        return tuple(dict.fromkeys(out))


@dataclass(frozen=True)
class MetricRow:
    estimator: str
    alpha: float
    n: int
    reps: int
    rmse: float
    coverage: float
    mean_ci_width: float
    n_failed: int


METRIC_COLUMNS = ("estimator", "alpha", "n", "reps", "rmse", "coverage", "mean_ci_width", "n_failed")


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    """Raw per-replication estimates and the aggregated metrics.

    Raw arrays have shape (reps, n_alpha, n_estimators, n_a); failed
    estimates are NaN.
    """

    config: ExperimentConfig
    truth: TruthTable
    estimators: tuple
    psi: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    failed: np.ndarray
    metrics: list

    def metric(self, estimator: str, alpha: float) -> MetricRow:
        for row in self.metrics:
            if row.estimator == estimator and row.alpha == alpha:
                return row
        raise KeyError((estimator, alpha))


def _one_replication(cfg: ExperimentConfig, rep: int, grid, nodes, est_ids):
    dgp = cfg.dgp
    data = generate_dataset(dgp, _child_seed(cfg.master_seed, rep, 0))
    truth_model = make_true_model(dgp)
    n_a, n_e = len(cfg.alphas), len(est_ids)
    m = cfg.a_values.size
    psi = np.full((n_a, n_e, m), np.nan)
    lo = np.full((n_a, n_e, m), np.nan)
    hi = np.full((n_a, n_e, m), np.nan)
    failed = np.zeros((n_a, n_e, m), dtype=bool)
    a_tab = np.union1d(cfg.a_values, [0.0, 1.0]) if dgp.binary else cfg.a_values
    for i, alpha in enumerate(cfg.alphas):
        if alpha == float("inf"):
            model = truth_model
        else:
            spec = SyntheticNoiseSpec(alpha, dgp.n, _child_seed(cfg.master_seed, rep, 1, i))
            model = make_noisy_model(truth_model, spec, data.n, nodes, binary=dgp.binary)
        table = tabulate(model, data, a_tab, None if dgp.binary else grid)
        reports = estimate_curve(
            data, table, cfg.indicator, cfg.trim, None if dgp.binary else cfg.kernel,
            cfg.a_values, cfg.estimators, cfg.conf_level,
        )
        for rep_ in reports:
            e = est_ids.index(rep_.estimator_id)
            j = int(np.flatnonzero(cfg.a_values == rep_.a)[0])
            if rep_.ok:
                psi[i, e, j] = rep_.psi_hat
                if rep_.ci is not None:
                    lo[i, e, j], hi[i, e, j] = rep_.ci
            else:
                failed[i, e, j] = True
    return psi, lo, hi, failed


def aggregate_metrics(cfg: ExperimentConfig, truth: TruthTable, est_ids, psi, lo, hi, failed) -> list[MetricRow]:
    """RMSE, coverage and interval width averaged over ``a`` with weights
    ``p(a)`` normalised over the evaluation grid; failures excluded per ``a``."""
    rows = []
    p = truth.p_a / truth.p_a.sum()
    for i, alpha in enumerate(cfg.alphas):
        for e, est in enumerate(est_ids):
            target = truth.target(est)
            err = psi[:, i, e, :] - target[None, :]
            ok = ~failed[:, i, e, :]
            usable = ok.any(axis=0)
            w = np.where(usable, p, 0.0)
            w = w / w.sum() if w.sum() > 0 else w
            with np.errstate(invalid="ignore"):
                mse = np.nanmean(np.where(ok, err * err, np.nan), axis=0)
                rmse = float(np.sum(w * np.sqrt(np.where(usable, mse, 0.0)))) if usable.any() else float("nan")
                has_ci = ok & np.isfinite(lo[:, i, e, :])
                if has_ci.any():
                    covered = (lo[:, i, e, :] <= target) & (target <= hi[:, i, e, :])
                    cov_a = np.where(usable, np.sum(covered & has_ci, axis=0) / np.maximum(has_ci.sum(axis=0), 1), 0.0)
                    width = np.where(has_ci, hi[:, i, e, :] - lo[:, i, e, :], 0.0).sum(axis=0) / np.maximum(has_ci.sum(axis=0), 1)
                    coverage = min(1.0, float(np.sum(w * cov_a)))
                    mean_width = float(np.sum(w * width))
                else:
                    coverage = mean_width = float("nan")
            rows.append(MetricRow(est, float(alpha), cfg.dgp.n, cfg.reps, rmse, coverage, mean_width, int(failed[:, i, e, :].sum())))
    return rows


def run_experiment(cfg: ExperimentConfig, truth: TruthTable | None = None, threads: int = 1, cache_dir=None) -> ExperimentResult:
    """Replicate ``cfg.reps`` datasets and score every estimator at every rate.

    Replication ``r`` draws its data from the stream keyed by
    ``(master_seed, r)``, so results do not depend on ``threads``.
    """
    if truth is None:
        truth = compute_truth(
            cfg.dgp, cfg.trim, cfg.indicator, None if cfg.dgp.binary else cfg.kernel, cfg.a_values,
            cfg.truth_mc_n, cfg.truth_seed, None if cfg.dgp.binary else cfg.grid, cache_dir,
        )
    grid = None if cfg.dgp.binary else cfg.grid
    nodes = None if cfg.dgp.binary else noise_nodes(grid.points[0], grid.points[-1])
    est_ids = cfg.estimator_ids

    def work(rep):
        return _one_replication(cfg, rep, grid, nodes, est_ids)

    if threads <= 1:
        results = [work(r) for r in range(cfg.reps)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(cfg.reps)))
    psi, lo, hi, failed = (np.stack([r[k] for r in results]) for k in range(4))
    metrics = aggregate_metrics(cfg, truth, est_ids, psi, lo, hi, failed)
    return ExperimentResult(cfg, truth, est_ids, psi, lo, hi, failed, metrics)


def run_binary_experiment(cfg: ExperimentConfig, truth: TruthTable | None = None, threads: int = 1, cache_dir=None) -> ExperimentResult:
    """:func:`run_experiment` for the binary-treatment design, evaluated at ``a = 1``."""
    if not cfg.dgp.binary:
        raise ValueError("run_binary_experiment needs the binary DGP")
    return run_experiment(cfg, truth, threads, cache_dir)


def write_metrics_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_COLUMNS)
        for r in rows:
            writer.writerow([
                r.estimator, _fmt(r.alpha), r.n, r.reps, _fmt(r.rmse), _fmt(r.coverage), _fmt(r.mean_ci_width), r.n_failed,
            ])


def write_raw_csv(result: ExperimentResult, path) -> None:
    """One row per (replication, alpha, estimator, a)."""
    cfg = result.config
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rep", "alpha", "estimator", "a", "psi_hat", "ci_lo", "ci_hi", "failed"])
        for r in range(cfg.reps):
            for i, alpha in enumerate(cfg.alphas):
                for e, est in enumerate(result.estimators):
                    for j, a in enumerate(cfg.a_values):
                        writer.writerow([
                            r, _fmt(alpha), est, _fmt(a), _fmt(result.psi[r, i, e, j]),
                            _fmt(result.lo[r, i, e, j]), _fmt(result.hi[r, i, e, j]), int(result.failed[r, i, e, j]),
                        ])


def _fmt(v) -> str:
    return format(float(v), ".17g")


# --------------------------------------------------------------------------
# second-order bias study


@dataclass(frozen=True, eq=False)
class BiasStudy:
    ns: np.ndarray
    bias: np.ndarray
    bias_se: np.ndarray
    slope: float
    target: float


def numerator_bias_study(
    ns=(500, 2000, 8000),
    alpha: float = 0.25,
    reps: int = 500,
    a: float = 0.5,
    t: float = 0.1,
    h: float = 0.1,
    epsilon: float = 0.01,
    master_seed: int = 0,
    truth_mc_n: int = 100_000,
    threads: int = 1,
) -> BiasStudy:
    """Mean error of the one-step numerator ``P_n{phi_num}`` with rate-``alpha``
    nuisances, and the log-log slope of ``|bias|`` against ``n``."""
    dgp = DGPSpec()
    kernel, indicator = KernelConfig(h), IndicatorConfig(epsilon)
    grid = simulation_grid(h, epsilon)
    nodes = noise_nodes(grid.points[0], grid.points[-1])
    truth = compute_truth(dgp, TrimSpec.fixed(t), indicator, kernel, [a], truth_mc_n, grid=grid)
    target = float(truth.state_num[0])
    model = make_true_model(dgp)
    bias, bias_se = [], []
    for k, n in enumerate(ns):
        spec_n = DGPSpec(n=int(n))

        def work(r, n=n, k=k, spec_n=spec_n):
            data = generate_dataset(spec_n, _child_seed(master_seed, k, r, 0))
            noisy = make_noisy_model(model, SyntheticNoiseSpec(alpha, int(n), _child_seed(master_seed, k, r, 1)), data.n, nodes)
            table = tabulate(noisy, data, [a], grid)
            mat = continuous_eif_matrix(data, table, kernel, indicator, [a], t)
            return float(weighted_mean(mat["num"][:, 0], data.w))

        if threads <= 1:
            vals = np.array([work(r) for r in range(reps)])
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                vals = np.array(list(pool.map(work, range(reps))))
        bias.append(vals.mean() - target)
        bias_se.append(np.sqrt(vals.var(ddof=1) / reps + truth.state_num_se[0] ** 2))
    bias = np.array(bias)
    slope = float(np.polyfit(np.log(np.asarray(ns, dtype=float)), np.log(np.abs(bias)), 1)[0])
    return BiasStudy(np.asarray(ns), bias, np.array(bias_se), slope, target)
