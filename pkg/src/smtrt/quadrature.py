"""Angular and spatial quadrature rules for slab geometry."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AngularQuadrature:
    """Slab S_N set: direction cosines ``mu`` and weights ``w`` with sum(w) = 2.

    Directions are stored in ascending ``mu`` order; every sweep and moment
    reduction walks them in that order.
    """

    mu: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        w = np.asarray(self.w, dtype=float)
        if mu.shape != w.shape or mu.ndim != 1:
            raise ValueError("mu and w must be 1D arrays of equal length")
        if np.any(w <= 0) or np.any(np.abs(mu) >= 1):
            raise ValueError("weights must be positive and |mu| < 1")
        order = np.argsort(mu, kind="stable")
        object.__setattr__(self, "mu", mu[order])
        object.__setattr__(self, "w", w[order])

    @property
    def N(self) -> int:
        return self.mu.size


def _legendre(n: int, x: np.ndarray):
    """P_n(x) and P_n'(x) by the three-term recurrence."""
    p0, p1 = np.ones_like(x), x.copy()
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    dp = n * (x * p1 - p0) / (x * x - 1.0)
    return p1, dp


def gauss_legendre_sn(N: int) -> AngularQuadrature:
    """Gauss-Legendre S_N rule on mu in (-1, 1); roots of P_N found by Newton."""
    if not isinstance(N, (int, np.integer)) or N < 2 or N % 2:
        raise ValueError(f"S_N order must be an even integer >= 2, got {N!r}")
    k = np.arange(1, N + 1)
    x = np.cos(np.pi * (k - 0.25) / (N + 0.5))
    for _ in range(100):
        p, dp = _legendre(N, x)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    _, dp = _legendre(N, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    # enforce exact symmetry of the set
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return AngularQuadrature(x, w)


def alpha(quad: AngularQuadrature) -> float:
    """Half-range boundary coefficient sum(w |mu|) / sum(w)."""
    return float(np.sum(quad.w * np.abs(quad.mu)) / np.sum(quad.w))


@dataclass(frozen=True)
class SpatialRule:
    """Quadrature on the reference interval [0, 1]."""

    points: np.ndarray
    weights: np.ndarray


def lobatto2() -> SpatialRule:
    """Two-point Gauss-Lobatto rule (trapezoid); the lumping rule."""
    return SpatialRule(np.array([0.0, 1.0]), np.array([0.5, 0.5]))


def gauss3() -> SpatialRule:
    """Three-point Gauss-Legendre rule mapped to [0, 1]."""
    r = np.sqrt(3.0 / 5.0)
    return SpatialRule(
        0.5 * (1.0 + np.array([-r, 0.0, r])),
        np.array([5.0, 8.0, 5.0]) / 18.0,
    )
