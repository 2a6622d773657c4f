"""Adaptive quadrature helpers shared by the measure and mechanism code.

Everything goes through QUADPACK (``scipy.integrate.quad``) with a single
absolute tolerance. Integration warnings are promoted to
:class:`InconclusiveIntegral` so that callers never accept a value that
QUADPACK itself does not trust.
"""
from __future__ import annotations

import math
import warnings
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, special

ABS_TOL = 1e-10
REL_TOL = 1e-12
LIMIT = 400


class InconclusiveIntegral(ArithmeticError):
    """Raised when a numerical integral cannot be certified."""


def quad(f: Callable[[float], float], a: float, b: float, **kwargs) -> tuple[float, float]:
    """Integrate ``f`` over ``[a, b]`` and return ``(value, abserr)``."""
    kwargs.setdefault("epsabs", ABS_TOL)
    kwargs.setdefault("epsrel", REL_TOL)
    kwargs.setdefault("limit", LIMIT)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, err = integrate.quad(f, a, b, **kwargs)[:2]
        except integrate.IntegrationWarning as exc:
            raise InconclusiveIntegral(str(exc)) from None
    if not math.isfinite(value):
        raise InconclusiveIntegral(f"non-finite quadrature value {value!r}")
    return value, err


def panel_integrals(
    f: Callable[[np.ndarray], np.ndarray], edges: np.ndarray, order: int = 24, rtol: float = 1e-10
) -> np.ndarray:
    """Integrals of a vectorised ``f`` over consecutive panels ``[edges[i], edges[i+1]]``.

    Each panel gets a Gauss-Legendre rule of ``order`` nodes, checked against
    the rule of half the order; a disagreement above ``rtol`` (relative to
    the panel value, with the absolute floor ``ABS_TOL``) raises
    :class:`InconclusiveIntegral`.
    """
    edges = np.asarray(edges, dtype=float)
    lo, hi = edges[:-1, None], edges[1:, None]

    def rule(n: int) -> np.ndarray:
        x, w = _legendre(n)
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        return (half * w * f(mid + half * x)).sum(axis=1)

    fine, coarse = rule(order), rule(order // 2)
    if not np.all(np.isfinite(fine)):
        raise InconclusiveIntegral("non-finite panel integral")
    gap = np.abs(fine - coarse)
    if np.any(gap > np.maximum(rtol * np.abs(fine), ABS_TOL)):
        raise InconclusiveIntegral(f"panel rules disagree by up to {gap.max():.3g}")
    return fine


@lru_cache(maxsize=None)
def _legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    return special.roots_legendre(n)


def quad_halfline(f: Callable[[float], float], a: float = 0.0, split: float = 1.0) -> tuple[float, float]:
    """Integrate ``f`` over ``[a, inf)``.

    The domain is split at ``max(a, split)`` and the tail is mapped onto
    ``(0, 1/split]`` through ``w = 1/u``.
    """
    split = max(a, split)
    head, head_err = (0.0, 0.0) if split == a else quad(f, a, split)

    def mapped(u: float) -> float:
        if u == 0.0:
            return 0.0
        return f(1.0 / u) / (u * u)

    tail, tail_err = quad(mapped, 0.0, 1.0 / split)
    return head + tail, head_err + tail_err


def orthant_sphere_integral(g: Callable[[np.ndarray], float], dim: int) -> tuple[float, float]:
    """Integrate ``g`` over the unit sphere intersected with the closed orthant.

    Hyperspherical angles ``phi_1..phi_{d-1}`` all range over ``[0, pi/2]``;
    the surface element is ``prod_i sin(phi_i)^(d-1-i)``.
    """
    if dim == 1:
        return float(g(np.ones(1))), 0.0

    def point(angles: tuple[float, ...]) -> tuple[np.ndarray, float]:
        theta = np.empty(dim)
        s = 1.0
        jac = 1.0
        for i, phi in enumerate(angles):
            theta[i] = s * math.cos(phi)
            jac *= math.sin(phi) ** (dim - 2 - i)
            s *= math.sin(phi)
        theta[-1] = s
        return theta, jac

    def integrand(*angles: float) -> float:
        theta, jac = point(angles)
        return g(theta) * jac

    opts = {"epsabs": ABS_TOL, "epsrel": REL_TOL, "limit": 200}
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, err = integrate.nquad(integrand, [(0.0, math.pi / 2)] * (dim - 1), opts=opts)
        except integrate.IntegrationWarning as exc:
            raise InconclusiveIntegral(str(exc)) from None
    return value, err
