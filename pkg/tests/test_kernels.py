import os
import subprocess
import sys

import numpy as np
import pytest
from scipy.stats import norm

from trimcurve import kernels
from trimcurve._accel import HAS_NUMBA

needs_numba = pytest.mark.skipif(not HAS_NUMBA, reason="numba not installed")


@pytest.fixture
def inputs():
    rng = np.random.default_rng(0)
    n, g, m = 40, 60, 5
    pi_grid = rng.uniform(0.0, 2.0, (n, g))
    mu_grid = rng.normal(size=(n, g))
    kw = rng.uniform(0.0, 0.1, (g, m))
    kw[::7] = 0.0
    return kw, pi_grid, mu_grid


def _reference(kw, pi_grid, mu_grid, t, eps):
    """Loop-free restatement of the per-unit sums in scipy terms."""
    t = np.broadcast_to(t, (kw.shape[1],))
    z = (pi_grid[:, :, None] - t[None, None, :]) / eps
    s, d = norm.cdf(z), norm.pdf(z) / eps
    p, mu = pi_grid[:, :, None], mu_grid[:, :, None]
    k = kw[None]
    d2 = z / eps * d
    terms = [np.ones_like(s), mu, s, s * mu, d * p, d * p * mu, d, d * mu, d2 * p, d2 * p * mu]
    return np.stack([(k * f).sum(axis=1) for f in terms])


@pytest.mark.parametrize("t", [0.3, np.array([0.1, 0.3, 0.3, 0.7, 1.2])])
def test_numpy_grid_integrals_match_reference(inputs, t):
    kw, pi_grid, mu_grid = inputs
    got = kernels._grid_integrals_np(kw, pi_grid, mu_grid, np.broadcast_to(t, (5,)).astype(float), 0.05, True)
    assert np.allclose(got, _reference(kw, pi_grid, mu_grid, t, 0.05), rtol=1e-10, atol=1e-12)


@needs_numba
@pytest.mark.parametrize("with_dt", [False, True])
def test_backends_agree_on_grid_integrals(inputs, with_dt):
    kw, pi_grid, mu_grid = inputs
    t = np.array([0.1, 0.3, 0.3, 0.7, 1.2])
    a = kernels._grid_integrals_nb(kw, pi_grid, mu_grid, t, 0.05, with_dt)
    b = kernels._grid_integrals_np(kw, pi_grid, mu_grid, t, 0.05, with_dt)
    assert a.shape == b.shape == (10 if with_dt else 6, 40, 5)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


@needs_numba
def test_backends_agree_on_den_paths(inputs):
    _, pi_grid, _ = inputs
    w = np.random.default_rng(1).uniform(0, 2, pi_grid.shape[0])
    t = np.linspace(0, 0.5, 11)
    a = kernels._den_path_means_nb(pi_grid, w, t, 0.02)
    b = kernels._den_path_means_np(pi_grid, w, t, 0.02)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-14)
    wn = w / w.sum()
    assert np.allclose(b[0, :, 4], wn @ norm.cdf((pi_grid - t[4]) / 0.02))


@needs_numba
def test_backends_agree_on_nw_sums():
    rng = np.random.default_rng(2)
    xtr, xq = rng.uniform(size=(50, 2)), rng.uniform(size=(7, 2))
    y = rng.normal(size=(50, 3))
    w = rng.uniform(0, 1, 50)
    w[3] = 0
    inv_bw = np.array([5.0, 8.0])
    num_a, den_a = kernels._nw_sums_nb(xq, xtr, y, w, inv_bw)
    num_b, den_b = kernels._nw_sums_np(xq, xtr, y, w, inv_bw)
    assert np.allclose(num_a, num_b) and np.allclose(den_a, den_b)
    kv = w * np.exp(-0.5 * (((xq[:, None, :] - xtr[None]) * inv_bw) ** 2).sum(-1))
    assert np.allclose(den_a, kv.sum(1))


def test_pdf_cutoff_is_exact_zero():
    assert kernels.std_normal_pdf(40.0) == 0.0
    assert kernels.std_normal_pdf(0.0) == pytest.approx(1 / np.sqrt(2 * np.pi))


def _backend_in_subprocess(value):
    env = dict(os.environ, TRIMCURVE_BACKEND=value)
    return subprocess.run(
        [sys.executable, "-c", "from trimcurve._accel import BACKEND; print(BACKEND)"],
        env=env, capture_output=True, text=True,
    )


def test_backend_env_var():
    proc = _backend_in_subprocess("numpy")
    assert proc.returncode == 0 and proc.stdout.strip() == "numpy"
    proc = _backend_in_subprocess("fortran")
    assert proc.returncode != 0 and "TRIMCURVE_BACKEND" in proc.stderr
