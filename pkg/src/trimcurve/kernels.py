"""Hot loops: grid integrals of the influence functions, threshold-path
sweeps and Nadaraya-Watson sums.

Every public function dispatches to a numba kernel or to a numpy fallback
according to :mod:`trimcurve._accel`.  Both paths compute the same sums; they
agree to rounding, not bit-for-bit.
"""
import math

import numpy as np
from scipy.special import ndtr

from ._accel import USE_NUMBA, njit

SQRT2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
# |z| beyond this gives exp(-z^2/2) < 1e-313; returned as an exact zero.
PDF_CUTOFF = 38.0

# Row order of the stacked output of :func:`grid_integrals`.
BASE_TERMS = ("k", "mu", "s", "s_mu", "d_pi", "d_pi_mu")
DT_TERMS = ("d", "d_mu", "d2_pi", "d2_pi_mu")


def std_normal_pdf(z):
    z = np.asarray(z, dtype=float)
    out = INV_SQRT_2PI * np.exp(-0.5 * z * z)
    return np.where(np.abs(z) > PDF_CUTOFF, 0.0, out)


def std_normal_cdf(z):
    return ndtr(np.asarray(z, dtype=float))


@njit
def _pdf_scalar(z):
    if abs(z) > PDF_CUTOFF:
        return 0.0
    return INV_SQRT_2PI * math.exp(-0.5 * z * z)


@njit
def _cdf_scalar(z):
    return 0.5 * math.erfc(-z / SQRT2)


# --------------------------------------------------------------------------
# grid integrals


@njit
def _grid_integrals_nb(kw, pi_grid, mu_grid, t, eps, with_dt):
    n, g_len = pi_grid.shape
    m = kw.shape[1]
    n_terms = 10 if with_dt else 6
    out = np.zeros((n_terms, n, m))
    inv_eps = 1.0 / eps
    for i in range(n):
        for g in range(g_len):
            p = pi_grid[i, g]
            mu = mu_grid[i, g]
            # thresholds usually repeat across columns; reuse the last values
            t_last = math.nan
            z = s = d = 0.0
            for j in range(m):
                w = kw[g, j]
                if w == 0.0:
                    continue
                if t[j] != t_last:
                    t_last = t[j]
                    z = (p - t_last) * inv_eps
                    s = _cdf_scalar(z)
                    d = _pdf_scalar(z) * inv_eps
                out[0, i, j] += w
                out[1, i, j] += w * mu
                out[2, i, j] += w * s
                out[3, i, j] += w * s * mu
                out[4, i, j] += w * d * p
                out[5, i, j] += w * d * p * mu
                if with_dt:
                    d2 = z * inv_eps * d
                    out[6, i, j] += w * d
                    out[7, i, j] += w * d * mu
                    out[8, i, j] += w * d2 * p
                    out[9, i, j] += w * d2 * p * mu
    return out


def _grid_integrals_np(kw, pi_grid, mu_grid, t, eps, with_dt):
    n = pi_grid.shape[0]
    m = kw.shape[1]
    n_terms = 10 if with_dt else 6
    out = np.empty((n_terms, n, m))
    out[0] = np.broadcast_to(kw.sum(axis=0), (n, m))
    out[1] = mu_grid @ kw
    for t_val in np.unique(t):
        cols = np.flatnonzero(t == t_val)
        kc = kw[:, cols]
        z = (pi_grid - t_val) / eps
        s = std_normal_cdf(z)
        d = std_normal_pdf(z) / eps
        dp = d * pi_grid
        out[2][:, cols] = s @ kc
        out[3][:, cols] = (s * mu_grid) @ kc
        out[4][:, cols] = dp @ kc
        out[5][:, cols] = (dp * mu_grid) @ kc
        if with_dt:
            d2p = z / eps * dp
            out[6][:, cols] = d @ kc
            out[7][:, cols] = (d * mu_grid) @ kc
            out[8][:, cols] = d2p @ kc
            out[9][:, cols] = (d2p * mu_grid) @ kc
    return out


def grid_integrals(kw, pi_grid, mu_grid, t, eps, with_dt=False):
    """Per-unit quadrature sums over the treatment grid.

    Parameters
    ----------
    kw : (G, m) array
        Kernel weight times trapezoid weight, one column per evaluation point.
    pi_grid, mu_grid : (n, G) arrays
        Propensity and outcome regression at every unit and grid node.
    t : float or (m,) array
        Trimming threshold per evaluation column.
    eps : float
        Indicator smoothing scale.
    with_dt : bool
        Also return the sums needed for derivatives in ``t``.

    Returns
    -------
    (K, n, m) array with rows named by ``BASE_TERMS`` (+ ``DT_TERMS``), where
    ``s`` is the smoothed indicator, ``d`` its derivative in the propensity
    and ``d2`` the mixed derivative in propensity and threshold.
    """
    kw = np.ascontiguousarray(kw, dtype=float)
    pi_grid = np.ascontiguousarray(pi_grid, dtype=float)
    mu_grid = np.ascontiguousarray(mu_grid, dtype=float)
    t = np.ascontiguousarray(np.broadcast_to(np.asarray(t, dtype=float), (kw.shape[1],)))
    if USE_NUMBA:
        return _grid_integrals_nb(kw, pi_grid, mu_grid, t, float(eps), bool(with_dt))
    return _grid_integrals_np(kw, pi_grid, mu_grid, t, float(eps), bool(with_dt))


# --------------------------------------------------------------------------
# threshold path


@njit
def _den_path_means_nb(pi_grid, w, t_values, eps):
    n, g_len = pi_grid.shape
    n_t = t_values.shape[0]
    out = np.zeros((2, g_len, n_t))
    inv_eps = 1.0 / eps
    w_sum = 0.0
    for i in range(n):
        w_sum += w[i]
    for i in range(n):
        wi = w[i] / w_sum
        if wi == 0.0:
            continue
        for g in range(g_len):
            p = pi_grid[i, g]
            for k in range(n_t):
                z = (p - t_values[k]) * inv_eps
                out[0, g, k] += wi * _cdf_scalar(z)
                out[1, g, k] += wi * _pdf_scalar(z) * inv_eps * p
    return out


def _den_path_means_np(pi_grid, w, t_values, eps):
    wn = w / w.sum()
    out = np.empty((2, pi_grid.shape[1], t_values.size))
    for k, t_val in enumerate(t_values):
        z = (pi_grid - t_val) / eps
        out[0, :, k] = wn @ std_normal_cdf(z)
        out[1, :, k] = wn @ (std_normal_pdf(z) / eps * pi_grid)
    return out


def den_path_means(pi_grid, w, t_values, eps):
    """Weighted unit means of ``S(pi - t)`` and ``S'(pi - t) * pi``.

    Returns a (2, G, T) array over grid nodes and candidate thresholds; the
    denominator path for any evaluation point is then a pair of dot products
    with that point's kernel weights.
    """
    pi_grid = np.ascontiguousarray(pi_grid, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    t_values = np.ascontiguousarray(t_values, dtype=float)
    if USE_NUMBA:
        return _den_path_means_nb(pi_grid, w, t_values, float(eps))
    return _den_path_means_np(pi_grid, w, t_values, float(eps))


# --------------------------------------------------------------------------
# Nadaraya-Watson


@njit
def _nw_sums_nb(xq, xtr, ytr, w, inv_bw):
    m, p = xq.shape
    n = xtr.shape[0]
    k = ytr.shape[1]
    num = np.zeros((m, k))
    den = np.zeros(m)
    for q in range(m):
        for i in range(n):
            if w[i] == 0.0:
                continue
            d2 = 0.0
            for c in range(p):
                u = (xq[q, c] - xtr[i, c]) * inv_bw[c]
                d2 += u * u
            if d2 > 2.0 * PDF_CUTOFF * PDF_CUTOFF:
                continue
            kv = w[i] * math.exp(-0.5 * d2)
            den[q] += kv
            for j in range(k):
                num[q, j] += kv * ytr[i, j]
    return num, den


def _nw_sums_np(xq, xtr, ytr, w, inv_bw, chunk=512):
    m = xq.shape[0]
    num = np.empty((m, ytr.shape[1]))
    den = np.empty(m)
    xs = xtr * inv_bw
    for start in range(0, m, chunk):
        q = xq[start:start + chunk] * inv_bw
        d2 = ((q[:, None, :] - xs[None, :, :]) ** 2).sum(axis=2)
        kv = np.where(d2 > 2.0 * PDF_CUTOFF * PDF_CUTOFF, 0.0, np.exp(-0.5 * d2)) * w
        den[start:start + chunk] = kv.sum(axis=1)
        num[start:start + chunk] = kv @ ytr
    return num, den


def nw_sums(xq, xtr, ytr, w, bw):
    """Numerator and denominator sums of a weighted Gaussian product-kernel
    Nadaraya-Watson smoother.

    ``xq`` is (m, p), ``xtr`` (n, p), ``ytr`` (n, k), ``w`` (n,) and ``bw``
    (p,).  Kernel normalising constants cancel in the ratio and are omitted.
    """
    xq = np.ascontiguousarray(xq, dtype=float)
    xtr = np.ascontiguousarray(xtr, dtype=float)
    ytr = np.ascontiguousarray(ytr, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    inv_bw = np.ascontiguousarray(1.0 / np.asarray(bw, dtype=float))
    if USE_NUMBA:
        return _nw_sums_nb(xq, xtr, ytr, w, inv_bw)
    return _nw_sums_np(xq, xtr, ytr, w, inv_bw)
