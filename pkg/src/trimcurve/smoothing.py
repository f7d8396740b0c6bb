"""Kernel weights, smoothed trimming indicators and trapezoid quadrature."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import std_normal_cdf, std_normal_pdf

KERNEL_FAMILIES = ("gaussian",)
INDICATOR_FAMILIES = ("normal_cdf",)


@dataclass(frozen=True)
class KernelConfig:
    h: float
    family: str = "gaussian"

    def __post_init__(self):
        if not (np.isfinite(self.h) and self.h > 0):
            raise ValueError(f"bandwidth must be positive, got {self.h}")
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")


@dataclass(frozen=True)
class IndicatorConfig:
    epsilon: float
    family: str = "normal_cdf"

    def __post_init__(self):
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.family not in INDICATOR_FAMILIES:
            raise ValueError(f"unknown indicator family {self.family!r}")


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Nodes and composite-trapezoid weights on the treatment axis."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if points.ndim != 1 or points.size < 2 or points.shape != weights.shape:
            raise ValueError("grid needs matching 1-d points and weights, at least 2 nodes")
        if np.any(np.diff(points) <= 0):
            raise ValueError("grid points must be strictly increasing")
        if np.any(weights <= 0):
            raise ValueError("grid weights must be positive")
        points.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def trapezoid(cls, points) -> "QuadratureGrid":
        points = np.asarray(points, dtype=float)
        dx = np.diff(points)
        weights = np.zeros_like(points)
        weights[:-1] += dx / 2
        weights[1:] += dx / 2
        return cls(points, weights)

    @classmethod
    def uniform(cls, lo: float, hi: float, step: float) -> "QuadratureGrid":
        n_steps = int(np.round((hi - lo) / step))
        if n_steps < 1 or not np.isclose(lo + n_steps * step, hi, rtol=0, atol=1e-9 * max(1.0, abs(hi))):
            raise ValueError(f"[{lo}, {hi}] is not a whole number of steps of {step}")
        return cls.trapezoid(lo + step * np.arange(n_steps + 1))

    @property
    def size(self) -> int:
        return self.points.size

    def __len__(self):
        return self.points.size

    def spans(self, a, margin) -> bool:
        a = np.atleast_1d(np.asarray(a, dtype=float))
        return bool(self.points[0] <= a.min() - margin + 1e-12 and self.points[-1] >= a.max() + margin - 1e-12)


def default_step(h: float, epsilon: float | None = None) -> float:
    """``min(h/2, 0.05)``, further capped at ``epsilon`` when it is given.

    The cap keeps the threshold-derivative integrals resolved: their
    integrands change on the scale of ``epsilon`` in propensity units.
    """
    step = min(h / 2, 0.05)
    if epsilon is not None:
        step = min(step, epsilon)
    return step


def default_grid(a_min: float, a_max: float, h: float, step: float | None = None, epsilon: float | None = None) -> QuadratureGrid:
    """Uniform grid over ``[a_min - 5h, a_max + 5h]`` with :func:`default_step`.

    The ends are pushed outward to whole steps, so the covered range is at
    least the nominal one.
    """
    if step is None:
        step = default_step(h, epsilon)
    lo = step * np.floor(round((a_min - 5 * h) / step, 9))
    hi = step * np.ceil(round((a_max + 5 * h) / step, 9))
    n_steps = int(round((hi - lo) / step))
    return QuadratureGrid.trapezoid(lo + step * np.arange(n_steps + 1))


def kernel_weight(u, cfg: KernelConfig):
    """``K_h(u) = k(u/h)/h`` with ``k`` the standard normal density."""
    u = np.asarray(u, dtype=float)
    return std_normal_pdf(u / cfg.h) / cfg.h


def smooth_indicator(pi, t, cfg: IndicatorConfig):
    """Smoothed ``1(pi > t)``: the N(0, eps^2) CDF at ``pi - t``."""
    return std_normal_cdf((np.asarray(pi, dtype=float) - t) / cfg.epsilon)


def smooth_indicator_dpi(pi, t, cfg: IndicatorConfig):
    """Derivative of :func:`smooth_indicator` in ``pi`` (equals minus the ``t`` derivative)."""
    return std_normal_pdf((np.asarray(pi, dtype=float) - t) / cfg.epsilon) / cfg.epsilon


def smooth_indicator_dpi_dt(pi, t, cfg: IndicatorConfig):
    """Mixed derivative in ``pi`` and ``t``: ``((pi - t)/eps^2) * phi_eps(pi - t)``."""
    z = (np.asarray(pi, dtype=float) - t) / cfg.epsilon
    return z / cfg.epsilon * std_normal_pdf(z) / cfg.epsilon


def _check_two_sided(t):
    if not (0.0 < t < 0.5):
        raise ValueError(f"two-sided trimming needs 0 < t < 0.5, got {t}")


def smooth_indicator_two_sided(pi, t, cfg: IndicatorConfig):
    """Smoothed ``1(t < pi < 1 - t)`` as ``Phi_eps(pi - t) * Phi_eps(1 - t - pi)``."""
    _check_two_sided(t)
    pi = np.asarray(pi, dtype=float)
    return smooth_indicator(pi, t, cfg) * std_normal_cdf((1.0 - t - pi) / cfg.epsilon)


def smooth_indicator_two_sided_dpi(pi, t, cfg: IndicatorConfig):
    _check_two_sided(t)
    pi = np.asarray(pi, dtype=float)
    lower = (pi - t) / cfg.epsilon
    upper = (1.0 - t - pi) / cfg.epsilon
    return (std_normal_pdf(lower) * std_normal_cdf(upper) - std_normal_cdf(lower) * std_normal_pdf(upper)) / cfg.epsilon


def integrate(f, grid: QuadratureGrid) -> float:
    """Trapezoid value of ``f`` over the grid.

    ``f`` is either a callable evaluated at the nodes or an array of node
    values (the last axis runs over nodes).
    """
    values = f(grid.points) if callable(f) else np.asarray(f, dtype=float)
    return values @ grid.weights


def kernel_weight_matrix(grid: QuadratureGrid, a_values, kernel: KernelConfig) -> np.ndarray:
    """(G, m) matrix of ``K_h(a0 - a) * trapezoid weight`` for each evaluation point."""
    a_values = np.atleast_1d(np.asarray(a_values, dtype=float))
    return kernel_weight(grid.points[:, None] - a_values[None, :], kernel) * grid.weights[:, None]
