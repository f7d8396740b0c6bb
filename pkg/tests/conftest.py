import numpy as np
import pytest

from trimcurve.data import Dataset
from trimcurve.dgp import DGPSpec, generate_dataset, make_true_model
from trimcurve.nuisance import NuisanceModel


@pytest.fixture(autouse=True)
def _truth_cache(tmp_path_factory, monkeypatch):
    """Keep truth tables in a per-session directory."""
    monkeypatch.setenv("TRIMCURVE_CACHE", str(tmp_path_factory.getbasetemp() / "truth-cache"))


@pytest.fixture
def small_data():
    return generate_dataset(DGPSpec(n=300), 11)


@pytest.fixture
def true_model():
    return make_true_model(DGPSpec())


class ConstantOutcomeModel(NuisanceModel):
    """Arbitrary positive propensity, constant outcome regression."""

    def __init__(self, c, seed=0):
        rng = np.random.default_rng(seed)
        self.c = float(c)
        self.coef = rng.uniform(0.5, 2.0, 3)

    def pi(self, a, x, unit=None):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        a = np.asarray(a, dtype=float)
        x0 = x[:, 0] if a.ndim == 1 else x[:, :1]
        b0, b1, b2 = self.coef
        return 0.05 + 0.3 * (b0 + b1 * np.sin(3 * a + x0) ** 2 + b2 * x0)

    def mu(self, x, a, unit=None):
        return np.full(np.shape(a), self.c)


def constant_dataset(n, c, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, (n, 1))
    a = rng.normal(0.5, 0.3, n)
    return Dataset.from_arrays(x, a, np.full(n, c))


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS, format_line

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        terminalreporter.write_line(format_line(number))
