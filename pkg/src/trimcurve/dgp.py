"""Simulation data-generating processes with one uniform covariate."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .nuisance import NuisanceModel, TrueBinaryModel, TrueContinuousModel

DGP_IDS = ("continuous", "binary")


def _check_domain(x):
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)) or not np.all(np.isfinite(x)):
        raise ValueError("covariate must lie in [0, 1]")
    return x


def dgp_m(x):
    """Treatment mean: flat, then a quadratic ramp, then the identity."""
    x = _check_domain(x)
    return np.where(x < 0.25, 0.05, np.where(x < 0.5, 0.15 - 24 * (0.25 - x) * (0.5 - x), x))


def dgp_mu(x):
    """Outcome regression; does not depend on treatment."""
    x = _check_domain(x)
    return np.where(
        x <= 0.25,
        0.5 - 4 * (x - 0.2) ** 2,
        np.where(x <= 0.75, 0.25 + 2 * (x - 0.2) ** 2, 1.25 - x),
    )


@dataclass(frozen=True)
class DGPSpec:
    """``id`` is ``"continuous"`` (``A|X ~ N(m(X), sigma_a^2)``) or ``"binary"``
    (``A|X ~ Bern(m(X))``); ``binary_effect`` shifts ``E[Y|X, A=1]``."""

    id: str = "continuous"
    n: int = 1000
    sigma_a: float = 0.2
    sigma_y: float = 0.5
    binary_effect: float = 0.0

    def __post_init__(self):
        if self.id not in DGP_IDS:
            raise ValueError(f"unknown DGP id {self.id!r}; expected one of {DGP_IDS}")
        if self.sigma_a <= 0 or self.sigma_y <= 0:
            raise ValueError("sigmas must be positive")
        if self.n < 2:
            raise ValueError("n must be at least 2")

    @property
    def binary(self) -> bool:
        return self.id == "binary"


def make_true_model(dgp: DGPSpec) -> NuisanceModel:
    if not isinstance(dgp, DGPSpec):
        raise ValueError(f"not a registered DGP: {dgp!r}")
    if dgp.binary:
        return TrueBinaryModel(dgp_m, dgp_mu, dgp.binary_effect)
    return TrueContinuousModel(dgp_m, dgp_mu, dgp.sigma_a)


def generate_dataset(spec: DGPSpec, seed) -> Dataset:
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, spec.n)
    m = dgp_m(x)
    if spec.binary:
        a = (rng.uniform(0.0, 1.0, spec.n) < m).astype(float)
        y = dgp_mu(x) + spec.binary_effect * a + rng.normal(0.0, spec.sigma_y, spec.n)
    else:
        a = m + rng.normal(0.0, spec.sigma_a, spec.n)
        y = dgp_mu(x) + rng.normal(0.0, spec.sigma_y, spec.n)
    return Dataset.from_arrays(x[:, None], a, y)
