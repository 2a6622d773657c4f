"""Immigration and branching mechanisms and their one-dimensional projections.

``F(xi) = <beta, xi> + int (1 - e^{-<xi,z>}) nu(dz)``

``R_j(xi) = c_j xi_j^2 - <B e_j, xi> + int (e^{-<xi,z>} - 1 + <xi,z>) mu_j(dz)``

The projected mechanisms ``F^(k)`` and ``R^(k)`` act on a scalar argument and
only see the k-th coordinate of the jumps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .levy import AnisotropicStable, LevyMeasure, Zero, stable_constant
from .params import AdmissibleParams

__all__ = [
    "F",
    "R",
    "ProjectedMechanism",
    "StableTag",
    "project",
    "F_proj",
    "R_proj",
    "stable_constant",
    "positivity_threshold",
    "SCAN_MIN",
    "SCAN_MAX",
]

SCAN_MIN = 2.0**-20
SCAN_MAX = 2.0**20
BISECT_RTOL = 1e-9


def _orthant(xi: Any, d: int) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (d,):
        raise ValueError(f"expected a vector of length {d}")
    if np.any(xi < 0):
        raise ValueError("argument must lie in the nonnegative orthant")
    return xi


def F(p: AdmissibleParams, xi: Any) -> float:
    xi = _orthant(xi, p.dim)
    return float(p.beta @ xi + p.nu.immigration_integral(xi))


def R(p: AdmissibleParams, xi: Any) -> np.ndarray:
    xi = _orthant(xi, p.dim)
    jumps = np.array([m.branching_integral(xi) for m in p.mu], dtype=float)
    return p.c * xi**2 - p.B.T @ xi + jumps


@dataclass(frozen=True)
class StableTag:
    """``R^(k)(xi) = -b xi + K xi^alpha`` exactly."""

    alpha: float
    K: float


@dataclass(frozen=True)
class ProjectedMechanism:
    k: int
    beta: float
    b: float
    c: float
    nu: LevyMeasure
    mu: LevyMeasure
    stable: StableTag | None = None


def project(p: AdmissibleParams, k: int) -> ProjectedMechanism:
    """Bundle ``beta_k, b_kk, c_k`` with the one-dimensional marginals of ``nu`` and ``mu_k``."""
    if not 0 <= k < p.dim:
        raise ValueError(f"component {k} out of range")
    nu_k = p.nu.marginal(k)
    mu_k = p.mu[k].marginal(k)
    tag = None
    if p.c[k] == 0 and isinstance(mu_k, AnisotropicStable):
        tag = StableTag(mu_k.alpha, stable_constant(mu_k.alpha))
    return ProjectedMechanism(k, float(p.beta[k]), float(p.B[k, k]), float(p.c[k]), nu_k, mu_k, tag)


def F_proj(pm: ProjectedMechanism, xi: Any) -> Any:
    """``F^(k)(xi) = beta_k xi + int (1 - e^{-xi z_k}) nu(dz)``; vectorised over ``xi``."""
    xi = np.asarray(xi, dtype=float)
    if np.any(xi < 0):
        raise ValueError("argument must be nonnegative")
    return (pm.beta * xi + pm.nu.immigration_integral(xi[..., None]))[()]


def R_proj(pm: ProjectedMechanism, xi: Any) -> Any:
    """``R^(k)(xi) = -b_kk xi + c_k xi^2 + int (e^{-xi z_k} - 1 + xi z_k) mu_k(dz)``."""
    xi = np.asarray(xi, dtype=float)
    if np.any(xi < 0):
        raise ValueError("argument must be nonnegative")
    if pm.stable is not None:
        return (-pm.b * xi + pm.stable.K * xi**pm.stable.alpha)[()]
    return (-pm.b * xi + pm.c * xi**2 + pm.mu.branching_integral(xi[..., None]))[()]


def positivity_threshold(pm: ProjectedMechanism) -> float | None:
    """Infimum ``kappa`` such that ``R^(k)(xi) > 0`` for every ``xi > kappa``.

    ``R^(k)`` is convex with ``R^(k)(0) = 0``, so ``R^(k)(xi)/xi`` is
    nondecreasing and one positive value certifies positivity to its right.
    The stable family uses ``(max(0, b)/K)^(1/(alpha-1))``; otherwise a
    geometric scan over ``[2^-20, 2^20]`` is refined by bisection. Returns
    ``None`` when no positive value is found on the scanned range.
    """
    if pm.stable is not None:
        return (max(0.0, pm.b) / pm.stable.K) ** (1.0 / (pm.stable.alpha - 1.0))
    if isinstance(pm.mu, Zero) and pm.c == 0:
        return 0.0 if pm.b < 0 else None
    grid = np.geomspace(SCAN_MIN, SCAN_MAX, 41)
    vals = R_proj(pm, grid)
    pos = np.flatnonzero(vals > 0)
    if not len(pos):
        return None
    i = pos[0]
    # right slope at 0 is -b; nonnegative slope plus convexity gives positivity near 0
    if i == 0 and pm.b <= 0:
        return 0.0
    lo = 0.0 if i == 0 else grid[i - 1]
    hi = grid[i]
    while hi - lo > BISECT_RTOL * hi:
        mid = 0.5 * (lo + hi)
        if R_proj(pm, mid) > 0:
            hi = mid
        else:
            lo = mid
    return float(hi)
