"""Propensity and outcome-regression evaluators.

A nuisance model answers two vectorised queries:

* ``pi(a, x, unit=None)``: conditional density (or probability mass) of
  treatment ``a`` given covariates ``x``;
* ``mu(x, a, unit=None)``: outcome regression.

``x`` is (n, p) and ``a`` is (n,) or (n, k), one row per unit; results have
the shape of ``a``.  ``unit`` carries row ids for models whose values are
keyed by unit (the synthetic noisy models); other models ignore it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .data import Dataset
from .kernels import nw_sums, std_normal_pdf
from .smoothing import QuadratureGrid

VARIANCE_FLOOR = 1e-6
CLAMP = 1e-12


def _broadcast_rows(a, n):
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        a = np.full(n, float(a))
    if a.shape[0] != n:
        raise ValueError(f"treatment query has {a.shape[0]} rows for {n} units")
    return a


def _column(values, a):
    """Shape per-unit values (n,) to broadcast against ``a``."""
    return values if a.ndim == 1 else values[:, None]


class NuisanceModel:
    """Base class; subclasses override ``pi`` and/or ``mu``."""

    def pi(self, a, x, unit=None):
        raise NotImplementedError(f"{type(self).__name__} has no propensity model")

    def mu(self, x, a, unit=None):
        raise NotImplementedError(f"{type(self).__name__} has no outcome model")


class TrueContinuousModel(NuisanceModel):
    """``A | X ~ N(m(X), sigma_a^2)`` and ``E[Y | X, A] = mu(X)``; uses ``x[:, 0]``."""

    def __init__(self, mean_fn, outcome_fn, sigma_a):
        self.mean_fn = mean_fn
        self.outcome_fn = outcome_fn
        self.sigma_a = float(sigma_a)

    def pi(self, a, x, unit=None):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        a = _broadcast_rows(a, x.shape[0])
        m = _column(self.mean_fn(x[:, 0]), a)
        return std_normal_pdf((a - m) / self.sigma_a) / self.sigma_a

    def mu(self, x, a, unit=None):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        a = _broadcast_rows(a, x.shape[0])
        return np.broadcast_to(_column(self.outcome_fn(x[:, 0]), a), a.shape).copy()


class TrueBinaryModel(NuisanceModel):
    """``P(A = 1 | X) = m(X)``; ``mu(X, 1) = mu(X) + effect``, ``mu(X, 0) = mu(X)``."""

    def __init__(self, prob_fn, outcome_fn, effect=0.0):
        self.prob_fn = prob_fn
        self.outcome_fn = outcome_fn
        self.effect = float(effect)

    def pi(self, a, x, unit=None):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        a = _broadcast_rows(a, x.shape[0])
        p1 = _column(self.prob_fn(x[:, 0]), a)
        return np.where(a == 1, p1, 1.0 - p1)

    def mu(self, x, a, unit=None):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        a = _broadcast_rows(a, x.shape[0])
        base = _column(self.outcome_fn(x[:, 0]), a)
        return base + self.effect * (a == 1)


@dataclass(frozen=True)
class SyntheticNoiseSpec:
    alpha: float
    n: int
    seed: int

    def __post_init__(self):
        if not (0 < self.alpha <= 0.5):
            raise ValueError(f"alpha must lie in (0, 0.5], got {self.alpha}")
        if self.n < 1:
            raise ValueError("n must be at least 1")

    @property
    def scale(self) -> float:
        """Mean and standard deviation of the disturbances, ``n**-alpha``."""
        return float(self.n) ** (-self.alpha)


def _require_units(unit, n):
    if unit is None:
        raise ValueError("synthetic noisy models need unit ids for every query")
    unit = np.asarray(unit, dtype=np.intp)
    if unit.shape != (n,):
        raise ValueError("one unit id per query row is required")
    return unit


class NoisyContinuousModel(NuisanceModel):
    """Rate-controlled perturbation of a true continuous-treatment model.

    ``pi_hat = 2 * expit(logit(pi / 2) + Z_pi)`` and ``mu_hat = mu + Z_mu``
    with ``Z ~ N(n**-alpha, n**-2alpha)`` drawn once per (unit, node) of a
    fixed treatment grid.  Between nodes the disturbance is interpolated
    linearly; beyond the ends it is held constant.
    """

    def __init__(self, truth: NuisanceModel, spec: SyntheticNoiseSpec, n_units: int, nodes, pi_bound=2.0):
        self.truth = truth
        self.spec = spec
        self.pi_bound = float(pi_bound)
        self.nodes = np.asarray(nodes, dtype=float)
        if self.nodes.ndim != 1 or self.nodes.size < 2 or np.any(np.diff(self.nodes) <= 0):
            raise ValueError("noise nodes must be a strictly increasing 1-d array")
        rng = np.random.default_rng(spec.seed)
        delta = spec.scale
        self.z_pi = rng.normal(delta, delta, size=(n_units, self.nodes.size))
        self.z_mu = rng.normal(delta, delta, size=(n_units, self.nodes.size))
        self.z_pi.setflags(write=False)
        self.z_mu.setflags(write=False)
        self.clamp_count = 0

    @property
    def n_units(self) -> int:
        return self.z_pi.shape[0]

    def _noise(self, table, a, unit):
        nodes = self.nodes
        j = np.clip(np.searchsorted(nodes, a, side="right") - 1, 0, nodes.size - 2)
        frac = np.clip((a - nodes[j]) / (nodes[j + 1] - nodes[j]), 0.0, 1.0)
        rows = _column(unit, a)
        return table[rows, j] * (1.0 - frac) + table[rows, j + 1] * frac

    def pi(self, a, x, unit=None):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        a = _broadcast_rows(a, x.shape[0])
        unit = _require_units(unit, x.shape[0])
        ratio = self.truth.pi(a, x) / self.pi_bound
        outside = (ratio <= CLAMP) | (ratio >= 1.0 - CLAMP)
        self.clamp_count += int(outside.sum())
        ratio = np.clip(ratio, CLAMP, 1.0 - CLAMP)
        return self.pi_bound * expit(logit(ratio) + self._noise(self.z_pi, a, unit))

    def mu(self, x, a, unit=None):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        a = _broadcast_rows(a, x.shape[0])
        unit = _require_units(unit, x.shape[0])
        return self.truth.mu(x, a) + self._noise(self.z_mu, a, unit)


class NoisyBinaryModel(NuisanceModel):
    """Binary-treatment analogue: ``P_hat(A=1|X) = expit(logit(pi) + Z_pi)``,
    ``P_hat(A=0|X)`` its complement, and ``mu_hat(X, a) = mu(X, a) + Z_mu[a]``."""

    def __init__(self, truth: NuisanceModel, spec: SyntheticNoiseSpec, n_units: int):
        self.truth = truth
        self.spec = spec
        rng = np.random.default_rng(spec.seed)
        delta = spec.scale
        self.z_pi = rng.normal(delta, delta, size=n_units)
        self.z_mu = rng.normal(delta, delta, size=(n_units, 2))
        self.z_pi.setflags(write=False)
        self.z_mu.setflags(write=False)
        self.clamp_count = 0

    def pi(self, a, x, unit=None):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        a = _broadcast_rows(a, x.shape[0])
        unit = _require_units(unit, x.shape[0])
        p1 = self.truth.pi(np.ones(x.shape[0]), x)
        outside = (p1 <= CLAMP) | (p1 >= 1.0 - CLAMP)
        self.clamp_count += int(outside.sum())
        p1 = expit(logit(np.clip(p1, CLAMP, 1.0 - CLAMP)) + self.z_pi[unit])
        p1 = _column(p1, a)
        return np.where(a == 1, p1, 1.0 - p1)

    def mu(self, x, a, unit=None):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        a = _broadcast_rows(a, x.shape[0])
        unit = _require_units(unit, x.shape[0])
        level = (a == 1).astype(np.intp)
        return self.truth.mu(x, a) + self.z_mu[_column(unit, a), level]


def make_noisy_model(truth: NuisanceModel, spec: SyntheticNoiseSpec, n_units: int, nodes=None, binary=False):
    """Synthetic estimated nuisances with error of order ``n**-alpha``.

    Continuous models need the treatment ``nodes`` on which disturbances are
    drawn (normally the quadrature grid).
    """
    if binary:
        return NoisyBinaryModel(truth, spec, n_units)
    if nodes is None:
        raise ValueError("continuous noisy models need noise nodes")
    if isinstance(nodes, QuadratureGrid):
        nodes = nodes.points
    return NoisyContinuousModel(truth, spec, n_units, nodes)


# --------------------------------------------------------------------------
# kernel-regression fitters


def _nw_predict(xq, xtr, ytr, w, bw, fallback):
    num, den = nw_sums(xq, xtr, ytr, w, bw)
    out = np.empty_like(num)
    ok = den > 0
    out[ok] = num[ok] / den[ok, None]
    out[~ok] = fallback
    return out, ok


def _check_fit_inputs(data: Dataset, *bws):
    if data.n < 10:
        raise ValueError(f"at least 10 records are needed to fit, got {data.n}")
    for bw in bws:
        if not np.all(np.asarray(bw, dtype=float) > 0):
            raise ValueError("bandwidths must be positive")


class ConditionalGaussianPS(NuisanceModel):
    """``pi(a|x)`` as the ``N(m_hat(x), s_hat(x))`` density, with Nadaraya-Watson
    estimates of the conditional mean and variance of the treatment."""

    def __init__(self, data: Dataset, bw_m, bw_s):
        _check_fit_inputs(data, bw_m, bw_s)
        self.x = data.x
        self.w = data.w
        self.bw_m = np.broadcast_to(np.asarray(bw_m, dtype=float), (data.p,)).copy()
        self.bw_s = np.broadcast_to(np.asarray(bw_s, dtype=float), (data.p,)).copy()
        wn = data.w / data.w.sum()
        self.global_mean = float(wn @ data.a)
        self.global_var = max(float(wn @ (data.a - self.global_mean) ** 2), VARIANCE_FLOOR)
        m_train, _ = _nw_predict(data.x, data.x, data.a[:, None], data.w, self.bw_m, self.global_mean)
        self._a = data.a
        self._sq_resid = (data.a - m_train[:, 0]) ** 2

    def moments(self, x):
        """Conditional mean and (floored) variance of the treatment at ``x``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        m, _ = _nw_predict(x, self.x, self._a[:, None], self.w, self.bw_m, self.global_mean)
        s, _ = _nw_predict(x, self.x, self._sq_resid[:, None], self.w, self.bw_s, self.global_var)
        return m[:, 0], np.maximum(s[:, 0], VARIANCE_FLOOR)

    def pi(self, a, x, unit=None):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        a = _broadcast_rows(a, x.shape[0])
        m, v = self.moments(x)
        sd = _column(np.sqrt(v), a)
        return std_normal_pdf((a - _column(m, a)) / sd) / sd


class KernelOutcomeRegression(NuisanceModel):
    """Weighted Nadaraya-Watson regression of ``Y`` on ``(X, A)``."""

    def __init__(self, data: Dataset, bw_x, bw_a):
        _check_fit_inputs(data, bw_x, bw_a)
        self.xa = np.column_stack([data.x, data.a])
        self.y = data.y
        self.w = data.w
        bw_x = np.broadcast_to(np.asarray(bw_x, dtype=float), (data.p,))
        self.bw = np.append(bw_x, float(bw_a))
        self.global_mean = float(data.w @ data.y / data.w.sum())

    def mu(self, x, a, unit=None):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        a = _broadcast_rows(a, x.shape[0])
        a2 = a.reshape(x.shape[0], -1)
        k = a2.shape[1]
        q = np.column_stack([np.repeat(x, k, axis=0), a2.ravel()])
        out, _ = _nw_predict(q, self.xa, self.y[:, None], self.w, self.bw, self.global_mean)
        return out[:, 0].reshape(a.shape)


class CombinedModel(NuisanceModel):
    """Pairs a propensity model with an outcome model."""

    def __init__(self, pi_model: NuisanceModel, mu_model: NuisanceModel):
        self.pi_model = pi_model
        self.mu_model = mu_model

    def pi(self, a, x, unit=None):
        return self.pi_model.pi(a, x, unit)

    def mu(self, x, a, unit=None):
        return self.mu_model.mu(x, a, unit)


def fit_conditional_gaussian_ps(data: Dataset, bw_m, bw_s) -> ConditionalGaussianPS:
    return ConditionalGaussianPS(data, bw_m, bw_s)


def fit_outcome_regression(data: Dataset, bw_x, bw_a) -> KernelOutcomeRegression:
    return KernelOutcomeRegression(data, bw_x, bw_a)


def silverman_bandwidth(values, weights=None) -> float:
    """Rule-of-thumb Gaussian bandwidth ``1.06 * sd * n**-1/5``."""
    values = np.asarray(values, dtype=float)
    w = np.ones_like(values) if weights is None else np.asarray(weights, dtype=float)
    wn = w / w.sum()
    sd = np.sqrt(wn @ (values - wn @ values) ** 2)
    return float(max(1.06 * sd * values.size ** (-0.2), 1e-3))


def kernel_fit_recipe(bw_scale=1.0):
    """Nuisance fitter for real data: Gaussian propensity plus kernel outcome
    regression with rule-of-thumb bandwidths times ``bw_scale``."""

    def recipe(train: Dataset) -> NuisanceModel:
        bw_x = np.array([silverman_bandwidth(train.x[:, j], train.w) for j in range(train.p)]) * bw_scale
        bw_a = silverman_bandwidth(train.a, train.w) * bw_scale
        return CombinedModel(
            fit_conditional_gaussian_ps(train, bw_x, bw_x),
            fit_outcome_regression(train, bw_x, bw_a),
        )

    return recipe


# --------------------------------------------------------------------------
# tabulation


@dataclass(frozen=True, eq=False)
class NuisanceTable:
    """Nuisance values for one evaluation dataset.

    ``pi_obs``/``mu_obs`` are at the observed treatments, ``pi_grid``/``mu_grid``
    at the quadrature nodes (absent for discrete treatments), and
    ``pi_eval``/``mu_eval`` at the requested evaluation points ``a_values``.
    """

    a_values: np.ndarray
    pi_obs: np.ndarray
    mu_obs: np.ndarray
    pi_eval: np.ndarray
    mu_eval: np.ndarray
    pi_grid: np.ndarray | None = None
    mu_grid: np.ndarray | None = None
    grid: QuadratureGrid | None = None

    @property
    def n(self) -> int:
        return self.pi_obs.size

    def eval_index(self, a) -> int:
        hits = np.flatnonzero(np.isclose(self.a_values, a, rtol=0, atol=1e-12))
        if hits.size == 0:
            raise KeyError(f"treatment value {a} was not tabulated")
        return int(hits[0])

    def take(self, idx) -> "NuisanceTable":
        idx = np.asarray(idx)
        grid_part = {}
        if self.pi_grid is not None:
            grid_part = dict(pi_grid=self.pi_grid[idx], mu_grid=self.mu_grid[idx], grid=self.grid)
        return NuisanceTable(
            self.a_values, self.pi_obs[idx], self.mu_obs[idx], self.pi_eval[idx], self.mu_eval[idx], **grid_part
        )

    @staticmethod
    def stitch(parts, indices, n) -> "NuisanceTable":
        """Reassemble fold-wise tables into original unit order."""
        first = parts[0]

        def gather(name, width):
            shape = (n,) if width is None else (n, width)
            out = np.empty(shape)
            for part, idx in zip(parts, indices):
                out[idx] = getattr(part, name)
            return out

        k = first.a_values.size
        grid_part = {}
        if first.pi_grid is not None:
            g = first.pi_grid.shape[1]
            grid_part = dict(pi_grid=gather("pi_grid", g), mu_grid=gather("mu_grid", g), grid=first.grid)
        return NuisanceTable(
            first.a_values, gather("pi_obs", None), gather("mu_obs", None),
            gather("pi_eval", k), gather("mu_eval", k), **grid_part,
        )


def tabulate(model: NuisanceModel, data: Dataset, a_values, grid: QuadratureGrid | None = None, units=None) -> NuisanceTable:
    """Evaluate ``model`` once at every point the estimators will query."""
    a_values = np.atleast_1d(np.asarray(a_values, dtype=float))
    n = data.n
    if units is None:
        units = np.arange(n)
    blocks = [data.a[:, None], np.broadcast_to(a_values, (n, a_values.size))]
    if grid is not None:
        blocks.append(np.broadcast_to(grid.points, (n, grid.size)))
    query = np.concatenate(blocks, axis=1)
    pi_all = model.pi(query, data.x, units)
    mu_all = model.mu(data.x, query, units)
    k = a_values.size
    grid_part = {}
    if grid is not None:
        grid_part = dict(pi_grid=pi_all[:, 1 + k:], mu_grid=mu_all[:, 1 + k:], grid=grid)
    return NuisanceTable(
        a_values, pi_all[:, 0], mu_all[:, 0], pi_all[:, 1:1 + k], mu_all[:, 1:1 + k], **grid_part
    )
