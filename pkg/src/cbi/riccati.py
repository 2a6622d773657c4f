"""Generalised Riccati system ``dv/dt = -R(v), v(0) = xi`` and the affine Laplace exponent.

The state is augmented with ``f(t) = int_0^t F(v(s)) ds`` so that both are
advanced by the same embedded Dormand-Prince 5(4) pair.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .mechanisms import F, R
from .params import AdmissibleParams

__all__ = ["RiccatiSolution", "RiccatiStepError", "solve", "laplace_exponent", "flow_check"]

DEFAULT_TOL = 1e-8
MAX_STEPS = 10**6
# absolute part of the error scale, relative to tol
ABS_FLOOR = 1e-6

# Dormand-Prince 5(4)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


class RiccatiStepError(RuntimeError):
    """Step size underflow or step budget exhausted; carries the last accepted point."""

    def __init__(self, message: str, t: float, v: np.ndarray):
        super().__init__(f"{message} at t={t:.6g}")
        self.t = t
        self.v = v


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    xi: np.ndarray
    t: np.ndarray
    v: np.ndarray  # shape (n, d)
    f_accum: np.ndarray
    err: np.ndarray  # local error estimate of each accepted step (0 at t=0)

    @property
    def v_final(self) -> np.ndarray:
        return self.v[-1]

    @property
    def f_final(self) -> float:
        return float(self.f_accum[-1])


def _rhs(p: AdmissibleParams):
    d = p.dim

    def f(y: np.ndarray) -> np.ndarray:
        # stages may dip marginally below the orthant; mechanisms are evaluated at the clamp
        v = np.maximum(y[:d], 0.0)
        out = np.empty(d + 1)
        out[:d] = -R(p, v)
        out[d] = F(p, v)
        return out

    return f


def solve(
    p: AdmissibleParams,
    xi: Any,
    T: float,
    tol: float = DEFAULT_TOL,
    max_steps: int = MAX_STEPS,
    h0: float | None = None,
    fixed_step: float | None = None,
) -> RiccatiSolution:
    """Integrate the Riccati system on ``[0, T]`` with local error per step ``<= tol``.

    The error is measured relative to ``|v|`` (and the accumulated ``f``), with
    an absolute floor of ``tol * ABS_FLOOR`` for components near zero, so
    decaying solutions keep their relative accuracy.

    An accepted step whose ``v`` undershoots the orthant by at most ``tol`` is
    clamped; a larger undershoot rejects the step. ``fixed_step`` disables
    the controller (used for order checks).
    """
    d = p.dim
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (d,) or np.any(xi < 0):
        raise ValueError("xi must be a vector in the nonnegative orthant")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if T < 0:
        raise ValueError("T must be nonnegative")
    y = np.append(xi, 0.0)
    ts, ys, errs = [0.0], [y.copy()], [0.0]
    if T == 0:
        return RiccatiSolution(xi, np.array(ts), np.array(ys)[:, :d], np.array(ys)[:, d], np.array(errs))

    rhs = _rhs(p)
    t = 0.0
    h = fixed_step if fixed_step is not None else (h0 or min(1e-3, T / 100))
    k = np.empty((7, d + 1))
    k[0] = rhs(y)
    steps = 0
    while t < T:
        if steps >= max_steps:
            raise RiccatiStepError("step budget exhausted", t, y[:d].copy())
        # a rounding sliver left before T is absorbed into the final step
        last = t + h >= T - 1e-12 * max(1.0, T)
        if last:
            h = T - t
        for s in range(1, 7):
            k[s] = rhs(y + h * (np.dot(_A[s], k[:s])))
        y_new = y + h * (_B5 @ k)
        local = h * (_E @ k)
        steps += 1
        if fixed_step is not None:
            err_ratio = 0.0
        else:
            scale = tol * (np.maximum(np.abs(y), np.abs(y_new)) + ABS_FLOOR)
            err_ratio = float(np.max(np.abs(local) / scale))
        vmin = float(np.min(y_new[:d])) if d else 0.0
        if err_ratio <= 1.0 and vmin >= -tol:
            y_new[:d] = np.maximum(y_new[:d], 0.0)
            t = T if last else t + h
            y = y_new
            ts.append(t)
            ys.append(y.copy())
            errs.append(float(np.max(np.abs(local))))
            k[0] = k[6]  # FSAL
            if fixed_step is None:
                # evaluated at the clamped point when clamping moved it
                if vmin < 0:
                    k[0] = rhs(y)
                factor = 5.0 if err_ratio == 0 else min(5.0, max(0.2, 0.9 * err_ratio**-0.2))
                h *= factor
        else:
            if fixed_step is not None:
                raise RiccatiStepError("fixed step leaves the orthant", t, y[:d].copy())
            h *= 0.5 if err_ratio <= 1.0 else max(0.2, 0.9 * err_ratio**-0.2)
        if t < T and h < 1e-14 * max(1.0, t):
            raise RiccatiStepError("step size underflow", t, y[:d].copy())
    arr = np.array(ys)
    return RiccatiSolution(xi, np.array(ts), arr[:, :d], arr[:, d], np.array(errs))


def laplace_exponent(
    p: AdmissibleParams, x: Any, xi: Any, T: float, tol: float = DEFAULT_TOL
) -> float:
    """``-<x, v(T, xi)> - int_0^T F(v(s, xi)) ds``; its exponential is ``E_x exp(-<xi, X(T)>)``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (p.dim,) or np.any(x < 0):
        raise ValueError("x must be a vector in the nonnegative orthant")
    sol = solve(p, xi, T, tol)
    return float(-x @ sol.v_final - sol.f_final)


def flow_check(p: AdmissibleParams, xi: Any, s: float, t: float, tol: float = DEFAULT_TOL) -> float:
    """Sup-norm defect of the flow property ``v(t + s, xi) = v(t, v(s, xi))``."""
    direct = solve(p, xi, t + s, tol).v_final
    composed = solve(p, solve(p, xi, s, tol).v_final, t, tol).v_final
    return float(np.max(np.abs(direct - composed)))
