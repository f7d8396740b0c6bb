"""Reference values computed without the package's estimators.

Every integral over the covariate uses a midpoint rule on (0, 1); integrals
over the treatment use a fine trapezoid written out here.  Only the DGP
regression functions are shared with the package.
"""
import numpy as np
from scipy.special import ndtr
from scipy.stats import norm

from trimcurve.dgp import dgp_m, dgp_mu

SIGMA_A = 0.2


def x_midpoints(m=4000):
    return (np.arange(m) + 0.5) / m


def pi_continuous(a, x):
    return norm.pdf(a, dgp_m(x), SIGMA_A)


def smooth_step(pi, t, eps):
    return ndtr((pi - t) / eps)


def continuous_targets(a, t, h, eps, m_x=4000, step=5e-4, width=8.0):
    """Smoothed numerator, denominator and untrimmed curve at ``(a, t)``
    for the continuous design with true nuisances."""
    x = x_midpoints(m_x)
    a0 = np.arange(a - width * h, a + width * h + step / 2, step)
    wq = np.full(a0.size, step)
    wq[0] = wq[-1] = step / 2
    k = norm.pdf((a0 - a) / h) / h * wq
    s = smooth_step(pi_continuous(a0[None, :], x[:, None]), t, eps)
    mu = dgp_mu(x)
    num = float(np.mean(mu * (s @ k)))
    den = float(np.mean(s @ k))
    sate = float(np.mean(mu) * k.sum())
    return {"num": num, "den": den, "sate": sate}


def trimmed_curve(a_values, t, eps, m_x=20000):
    """Unsmoothed trimmed curve and its weight ``E S(pi(a|X))`` on a set of
    treatment values."""
    x = x_midpoints(m_x)
    s = smooth_step(pi_continuous(np.asarray(a_values)[None, :], x[:, None]), t, eps)
    w = s.mean(axis=0)
    return (s * dgp_mu(x)[:, None]).mean(axis=0) / w, w


def binary_targets(t, eps, effect=0.0, m_x=200_000):
    """Discrete (a = 1) and two-sided contrast targets for the binary design."""
    x = x_midpoints(m_x)
    p1 = dgp_m(x)
    mu1 = dgp_mu(x) + effect
    mu0 = dgp_mu(x)
    s1 = smooth_step(p1, t, eps)
    s2 = s1 * ndtr((1 - t - p1) / eps)
    return {
        "num": float(np.mean(s1 * mu1)),
        "den": float(np.mean(s1)),
        "aipw": float(np.mean(mu1)),
        "contrast_num": float(np.mean(s2 * (mu1 - mu0))),
        "contrast_den": float(np.mean(s2)),
    }
