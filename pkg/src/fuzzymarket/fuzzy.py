"""Gaussian fuzzy opinions and the algebra used by the opinion network.

A fuzzy opinion is the Gaussian membership function
``mu(x) = exp(-(x - center)**2 / sdv**2)``.  The center is the opinion
itself (an expected price) and ``sdv`` expresses how unsure the holder is.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidDomainError, InvalidInputError, InvalidWeightsError

#: Lower clamp applied to every sdv produced by a network update.
SIGMA_FLOOR = 1e-9


def _check_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise InvalidInputError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class GaussianOpinion:
    center: float
    sdv: float

    def __post_init__(self):
        c = _check_finite("center", self.center)
        s = _check_finite("sdv", self.sdv)
        if s < 0:
            raise InvalidInputError(f"sdv must be non-negative, got {s!r}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "sdv", s)

    def membership(self, x):
        """Evaluate the membership function at ``x`` (scalar or array)."""
        x = np.asarray(x, dtype=float)
        if self.sdv == 0:
            return (x == self.center).astype(float)
        with np.errstate(over="ignore"):
            return np.exp(-(((x - self.center) / self.sdv) ** 2))


def closeness(a: GaussianOpinion, b: GaussianOpinion) -> float:
    """Height of the intersection of two Gaussian fuzzy sets.

    Two crisp opinions (both sdv zero) are fully close when they coincide
    and not close at all otherwise.
    """
    dc = a.center - b.center
    spread = a.sdv + b.sdv
    if spread == 0:
        return 1.0 if dc == 0 else 0.0
    # ratio first: spread**2 underflows for tiny sdvs
    with np.errstate(over="ignore"):
        z = float(np.float64(dc) / spread)
    return math.exp(-(z * z)) if math.isfinite(z) else 0.0


def weighted_average(
    opinions: Sequence[GaussianOpinion], weights: Sequence[float]
) -> GaussianOpinion:
    """Weighted sum of Gaussian fuzzy sets with convex weights.

    The result is again Gaussian; centers and sdvs both combine linearly.
    """
    if len(opinions) == 0 or len(opinions) != len(weights):
        raise InvalidWeightsError("opinions and weights must be non-empty and of equal length")
    w = np.asarray(weights, dtype=float)
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise InvalidWeightsError("weights must be finite and non-negative")
    if abs(math.fsum(w) - 1.0) > 1e-12:
        raise InvalidWeightsError(f"weights must sum to 1, got {math.fsum(w)!r}")
    center = math.fsum(wi * o.center for wi, o in zip(w, opinions))
    sdv = math.fsum(wi * o.sdv for wi, o in zip(w, opinions))
    return GaussianOpinion(center, sdv)


def compose_conditional(sigma_x: float, v: GaussianOpinion) -> GaussianOpinion:
    """Unconditional X from the conditional Gaussian ``X | V`` with spread ``sigma_x``.

    The compositional rule keeps the center of ``V`` and adds the two
    standard deviations.
    """
    sigma_x = _check_finite("sigma_x", sigma_x)
    if sigma_x < 0:
        raise InvalidInputError("sigma_x must be non-negative")
    return GaussianOpinion(v.center, sigma_x + v.sdv)


def compose_oracle(
    sigma_x: float,
    v: GaussianOpinion,
    domain: tuple[float, float],
    grid_points: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Grid evaluation of the sup-min compositional rule.

    For every grid point ``x`` this returns
    ``max_v' min(exp(-(x-v')**2/sigma_x**2), mu_V(v'))`` with ``v'`` ranging
    over the same grid.  It is a test oracle for :func:`compose_conditional`.

    ``max_v' min(...)`` equals ``exp(-min_v' h(v')**2)`` with
    ``h(v') = max(|x-v'|/sigma_x, |v'-c|/sigma_v)``.  ``h`` is convex in
    ``v'``, so its discrete minimiser is located by bisection on the forward
    difference, all grid ``x`` at once.  The result is identical to the
    quadratic brute force (see :func:`compose_oracle_bruteforce`).
    """
    sigma_x = _check_finite("sigma_x", sigma_x)
    lo, hi = (float(domain[0]), float(domain[1]))
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        raise InvalidDomainError(f"domain must be a finite interval with lo < hi, got {domain!r}")
    if grid_points < 100:
        raise InvalidDomainError("grid_points must be at least 100")
    if sigma_x <= 0 or v.sdv <= 0:
        raise InvalidInputError("oracle needs strictly positive sigma_x and v.sdv")

    grid = np.linspace(lo, hi, int(grid_points))

    def h(idx, x):
        vp = grid[idx]
        return np.maximum(np.abs(x - vp) / sigma_x, np.abs(vp - v.center) / v.sdv)

    # first index k with h(k+1) - h(k) >= 0 is the minimiser of the convex sequence
    left = np.zeros(grid.size, dtype=np.intp)
    right = np.full(grid.size, grid.size - 1, dtype=np.intp)
    while np.any(left < right):
        mid = (left + right) // 2
        rising = h(np.minimum(mid + 1, grid.size - 1), grid) >= h(mid, grid)
        right = np.where(rising, mid, right)
        left = np.where(rising, left, mid + 1)
    best = h(left, grid)
    return grid, np.exp(-(best**2))


def compose_oracle_bruteforce(
    sigma_x: float, v: GaussianOpinion, domain: tuple[float, float], grid_points: int
) -> tuple[np.ndarray, np.ndarray]:
    """Quadratic-cost version of :func:`compose_oracle`; for small grids only."""
    grid = np.linspace(domain[0], domain[1], int(grid_points))
    cond = np.exp(-((grid[:, None] - grid[None, :]) ** 2) / sigma_x**2)
    prior = np.exp(-((grid - v.center) ** 2) / v.sdv**2)
    return grid, np.max(np.minimum(cond, prior[None, :]), axis=1)
