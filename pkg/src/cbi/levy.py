"""Lévy measures on the nonnegative orthant.

Measures form a closed union of families whose behaviour at the origin and
at infinity is known exactly, so that finiteness of a moment integral is
decided from exponents rather than by truncating a quadrature.

Conventions
-----------
* ``|z|`` is the Euclidean norm.
* Regions are half-open radial shells ``lo < |z| <= hi``.
* Axes are 0-based.
* Moment methods return ``(value, abserr)``; ``value`` is ``math.inf`` when
  the integral diverges, and :class:`InconclusiveIntegral` is raised when
  no certified value is available.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from scipy import special

from ._quadrature import InconclusiveIntegral, orthant_sphere_integral, quad

__all__ = [
    "LevyMeasure",
    "Zero",
    "AnisotropicStable",
    "OrthantPowerLaw",
    "FiniteAtomic",
    "CompoundExponential",
    "Sum",
    "InconclusiveIntegral",
    "REGIONS",
    "stable_constant",
    "immigration_integral",
    "branching_integral",
    "moment",
    "marginal",
    "sample_large_jumps",
    "small_jump_stats",
    "measure_from_dict",
    "measure_to_dict",
]

REGIONS = {"small": (0.0, 1.0), "large": (1.0, math.inf), "full": (0.0, math.inf)}

Moment = tuple[float, float]


def _orthant_vector(xi: Any, dim: int) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1:] != (dim,):
        raise ValueError(f"expected trailing dimension {dim}, got shape {xi.shape}")
    if np.any(xi < 0) or not np.all(np.isfinite(xi)):
        raise ValueError("argument must lie in the nonnegative orthant")
    return xi


def _radial_power(q: float, lo: float, hi: float) -> float:
    """Return ``int_lo^hi r^(q-1) dr`` with exact divergence handling."""
    if hi <= lo:
        return 0.0
    if lo == 0.0 and q <= 0.0:
        return math.inf
    if math.isinf(hi) and q >= 0.0:
        return math.inf
    if q == 0.0:
        return math.log(hi / lo)
    upper = 0.0 if math.isinf(hi) else hi**q
    lower = 0.0 if lo == 0.0 else lo**q
    return (upper - lower) / q


def _phi(w: float) -> float:
    # (e^{-w} - 1 + w) / w^2, accurate near 0
    if w < 1e-4:
        return 0.5 - w / 6.0 + w * w / 24.0
    return (math.expm1(-w) + w) / (w * w)


@lru_cache(maxsize=None)
def stable_constant(alpha: float) -> float:
    """``K(alpha) = int_0^inf (e^{-w} - 1 + w) w^{-1-alpha} dw`` for alpha in (1, 2).

    Both endpoint singularities are handled by algebraic-weight quadrature:
    ``w^{1-alpha}`` at the origin and, after ``w = 1/u``, ``u^{alpha-2}`` at
    infinity.
    """
    alpha = float(alpha)
    if not 1.0 < alpha < 2.0:
        raise ValueError(f"stable index must lie in (1, 2), got {alpha}")
    head, _ = quad(_phi, 0.0, 1.0, weight="alg", wvar=(1.0 - alpha, 0.0))

    def tail(u: float) -> float:
        return u * math.exp(-1.0 / u) - u + 1.0 if u > 0.0 else 1.0

    rest, _ = quad(tail, 0.0, 1.0, weight="alg", wvar=(alpha - 2.0, 0.0))
    return head + rest


# ---------------------------------------------------------------------------
# orthant-sphere constants for |z|^{-d-gamma}
# ---------------------------------------------------------------------------


def _sphere_area(d: int) -> float:
    return math.pi ** (d / 2) / (special.gamma(d / 2) * 2 ** (d - 1))


def _sphere_axis_mean(d: int) -> float:
    return math.pi ** ((d - 1) / 2) / (2 ** (d - 1) * special.gamma((d + 1) / 2))


def _sphere_axis_power(d: int, p: float) -> float:
    return (
        _sphere_area(d)
        * special.gamma((1 + p) / 2)
        * special.gamma(d / 2)
        / (math.sqrt(math.pi) * special.gamma((d + p) / 2))
    )


# ---------------------------------------------------------------------------
# families
# ---------------------------------------------------------------------------


class LevyMeasure:
    """Base class of the measure families.

    Subclasses are frozen dataclasses; every method is pure.
    """

    dim: int
    finite_activity: bool = False
    _closed_forms: frozenset[str] = frozenset()

    def closed_form(self, functional: str) -> bool:
        """Whether ``functional`` is evaluated without quadrature."""
        return functional in self._closed_forms

    def immigration_integral(self, xi: Any) -> Any:
        raise NotImplementedError

    def branching_integral(self, xi: Any) -> Any:
        raise NotImplementedError

    def radial_moment(self, p: float, lo: float = 0.0, hi: float = math.inf) -> Moment:
        raise NotImplementedError

    def coord_moment(self, k: int, lo: float = 0.0, hi: float = math.inf) -> Moment:
        raise NotImplementedError

    def second_moment(self, k: int, l: int, lo: float = 0.0, hi: float = math.inf) -> Moment:
        raise NotImplementedError

    def origin_mass(self) -> float:
        return 0.0

    def marginal(self, k: int) -> LevyMeasure:
        raise NotImplementedError

    def tail_mass(self, eps: float) -> float:
        return self.radial_moment(0.0, eps, math.inf)[0]

    def sample_jumps(self, eps: float, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` i.i.d. jumps from the normalised restriction to ``|z| > eps``."""
        raise NotImplementedError

    def poisson_events(
        self, eps: float, horizon: float, scale: float, rng: np.random.Generator
    ) -> tuple[np.ndarray, np.ndarray]:
        """Events of a Poisson measure with intensity ``scale * dt * m(dz)`` on ``|z| > eps``.

        Returns sorted times in ``[0, horizon]`` and the jump vectors.
        """
        rate = horizon * scale * self.tail_mass(eps)
        if not math.isfinite(rate):
            raise ValueError(f"infinite tail mass above eps={eps}")
        n = int(rng.poisson(rate)) if rate > 0 else 0
        times = np.sort(rng.uniform(0.0, horizon, n))
        return times, self.sample_jumps(eps, n, rng)

    def _check_axis(self, k: int) -> None:
        if not 0 <= k < self.dim:
            raise ValueError(f"axis {k} out of range for dimension {self.dim}")


@dataclass(frozen=True)
class Zero(LevyMeasure):
    dim: int
    finite_activity = True
    _closed_forms = frozenset({"immigration", "branching", "moment", "second_moment", "tail_mass"})

    def immigration_integral(self, xi):
        xi = _orthant_vector(xi, self.dim)
        return np.zeros(xi.shape[:-1])[()]

    branching_integral = immigration_integral

    def radial_moment(self, p, lo=0.0, hi=math.inf):
        return 0.0, 0.0

    def coord_moment(self, k, lo=0.0, hi=math.inf):
        self._check_axis(k)
        return 0.0, 0.0

    def second_moment(self, k, l, lo=0.0, hi=math.inf):
        return 0.0, 0.0

    def marginal(self, k):
        self._check_axis(k)
        return Zero(1)

    def sample_jumps(self, eps, n, rng):
        if n:
            raise ValueError("cannot sample from the zero measure")
        return np.zeros((0, self.dim))


@dataclass(frozen=True)
class AnisotropicStable(LevyMeasure):
    """Density ``z_a^{-1-alpha}`` on the positive ``a``-th half axis, Dirac at 0 elsewhere."""

    dim: int
    axis: int
    alpha: float
    _closed_forms = frozenset({"immigration", "branching", "moment", "second_moment", "tail_mass"})

    def __post_init__(self):
        if not 1.0 < self.alpha < 2.0:
            raise ValueError(f"stable index must lie in (1, 2), got {self.alpha}")
        self._check_axis(self.axis)

    @property
    def K(self) -> float:
        return stable_constant(self.alpha)

    def immigration_integral(self, xi):
        xi = _orthant_vector(xi, self.dim)
        s = xi[..., self.axis]
        # (1 - e^{-sz}) ~ sz near 0 is not integrable against z^{-1-alpha}, alpha > 1
        return np.where(s > 0, math.inf, 0.0)[()]

    def branching_integral(self, xi):
        xi = _orthant_vector(xi, self.dim)
        return (self.K * xi[..., self.axis] ** self.alpha)[()]

    def radial_moment(self, p, lo=0.0, hi=math.inf):
        return _radial_power(p - self.alpha, lo, hi), 0.0

    def coord_moment(self, k, lo=0.0, hi=math.inf):
        self._check_axis(k)
        if k != self.axis:
            return 0.0, 0.0
        return self.radial_moment(1.0, lo, hi)

    def second_moment(self, k, l, lo=0.0, hi=math.inf):
        if k != self.axis or l != self.axis:
            return 0.0, 0.0
        return self.radial_moment(2.0, lo, hi)

    def marginal(self, k):
        self._check_axis(k)
        if k == self.axis:
            return AnisotropicStable(1, 0, self.alpha)
        return Zero(1)

    def sample_jumps(self, eps, n, rng):
        if eps <= 0:
            raise ValueError("stable jumps need a positive truncation level")
        out = np.zeros((n, self.dim))
        # inverse tail: P(Z > z) = (z / eps)^{-alpha}
        out[:, self.axis] = eps * rng.uniform(size=n) ** (-1.0 / self.alpha)
        return out


@dataclass(frozen=True)
class OrthantPowerLaw(LevyMeasure):
    """Density ``scale * |z|^{-d-gamma}`` on the orthant."""

    dim: int
    gamma: float
    scale: float = 1.0
    _closed_forms = frozenset({"moment", "second_moment", "tail_mass"})

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"power-law index must lie in (0, 1), got {self.gamma}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def closed_form(self, functional):
        # axis-aligned arguments use the scaling identity; others need quadrature
        if functional == "immigration":
            return self.dim == 1
        return super().closed_form(functional)

    @cached_property
    def axis_constant(self) -> float:
        """``C`` with ``int (1 - e^{-s z_k}) m(dz) = C s^gamma``."""
        g = self.gamma
        return float(self.scale * special.gamma(1 - g) / g * _sphere_axis_power(self.dim, g))

    def _sphere_quadrature(self, xi: np.ndarray) -> Moment:
        g = self.gamma
        value, err = orthant_sphere_integral(lambda th: float(xi @ th) ** g, self.dim)
        c = self.scale * special.gamma(1 - g) / g
        return c * value, c * err

    def immigration_integral(self, xi):
        xi = _orthant_vector(xi, self.dim)
        flat = xi.reshape(-1, self.dim)
        # rows with at most one nonzero entry use the scaling identity
        out = self.axis_constant * flat.sum(axis=1) ** self.gamma
        for i in np.flatnonzero(np.count_nonzero(flat, axis=1) > 1):
            out[i] = self._sphere_quadrature(flat[i])[0]
        return out.reshape(xi.shape[:-1])[()]

    def branching_integral(self, xi):
        xi = _orthant_vector(xi, self.dim)
        # e^{-x} - 1 + x ~ x at infinity is not integrable against r^{-1-gamma}
        return np.where(np.any(xi > 0, axis=-1), math.inf, 0.0)[()]

    def radial_moment(self, p, lo=0.0, hi=math.inf):
        return self.scale * _sphere_area(self.dim) * _radial_power(p - self.gamma, lo, hi), 0.0

    def coord_moment(self, k, lo=0.0, hi=math.inf):
        self._check_axis(k)
        return self.scale * _sphere_axis_mean(self.dim) * _radial_power(1 - self.gamma, lo, hi), 0.0

    def second_moment(self, k, l, lo=0.0, hi=math.inf):
        self._check_axis(k)
        self._check_axis(l)
        d = self.dim
        angular = _sphere_area(d) / d if k == l else _sphere_area(d) * 2 / (math.pi * d)
        return self.scale * angular * _radial_power(2 - self.gamma, lo, hi), 0.0

    def marginal(self, k):
        self._check_axis(k)
        # pushforward of |z|^{-d-gamma} under z -> z_k is C z^{-1-gamma}
        return OrthantPowerLaw(1, self.gamma, float(self.scale * _sphere_axis_power(self.dim, self.gamma)))

    def sample_jumps(self, eps, n, rng):
        if eps <= 0:
            raise ValueError("power-law jumps need a positive truncation level")
        r = eps * rng.uniform(size=n) ** (-1.0 / self.gamma)
        g = np.abs(rng.standard_normal((n, self.dim)))
        return r[:, None] * g / np.linalg.norm(g, axis=1, keepdims=True)


@dataclass(frozen=True, init=False)
class FiniteAtomic(LevyMeasure):
    """Finite sum of point masses. Atoms at the origin are representable but inadmissible."""

    atoms: tuple[tuple[tuple[float, ...], float], ...]
    finite_activity = True
    _closed_forms = frozenset({"immigration", "branching", "moment", "second_moment", "tail_mass"})

    def __init__(self, atoms: Iterable[tuple[Sequence[float], float]]):
        norm: list[tuple[tuple[float, ...], float]] = []
        for point, mass in atoms:
            point = tuple(float(v) for v in np.atleast_1d(point))
            mass = float(mass)
            if not mass > 0 or not math.isfinite(mass):
                raise ValueError(f"atom masses must be positive and finite, got {mass}")
            if any(v < 0 or not math.isfinite(v) for v in point):
                raise ValueError(f"atom {point} is outside the orthant")
            norm.append((point, mass))
        if not norm:
            raise ValueError("use Zero for an empty atom list")
        if len({len(p) for p, _ in norm}) != 1:
            raise ValueError("atoms have inconsistent dimensions")
        object.__setattr__(self, "atoms", tuple(norm))

    @property
    def dim(self) -> int:
        return len(self.atoms[0][0])

    @cached_property
    def points(self) -> np.ndarray:
        return np.array([p for p, _ in self.atoms])

    @cached_property
    def masses(self) -> np.ndarray:
        return np.array([m for _, m in self.atoms])

    @cached_property
    def norms(self) -> np.ndarray:
        # rescaled so that tiny coordinates do not underflow to a zero norm
        top = np.abs(self.points).max(axis=1)
        safe = np.where(top > 0, top, 1.0)
        return top * np.linalg.norm(self.points / safe[:, None], axis=1)

    def _in(self, lo, hi):
        return (self.norms > lo) & (self.norms <= hi)

    def immigration_integral(self, xi):
        xi = _orthant_vector(xi, self.dim)
        return (-np.expm1(-(xi @ self.points.T)) @ self.masses)[()]

    def branching_integral(self, xi):
        xi = _orthant_vector(xi, self.dim)
        s = xi @ self.points.T
        return ((np.expm1(-s) + s) @ self.masses)[()]

    def radial_moment(self, p, lo=0.0, hi=math.inf):
        sel = self._in(lo, hi)
        return float(np.sum(self.masses[sel] * self.norms[sel] ** p)), 0.0

    def coord_moment(self, k, lo=0.0, hi=math.inf):
        self._check_axis(k)
        sel = self._in(lo, hi)
        return float(np.sum(self.masses[sel] * self.points[sel, k])), 0.0

    def second_moment(self, k, l, lo=0.0, hi=math.inf):
        sel = self._in(lo, hi)
        return float(np.sum(self.masses[sel] * self.points[sel, k] * self.points[sel, l])), 0.0

    def origin_mass(self):
        return float(self.masses[~self.points.any(axis=1)].sum())

    def marginal(self, k):
        self._check_axis(k)
        kept = [((p[k],), m) for p, m in self.atoms if p[k] > 0]
        return FiniteAtomic(kept) if kept else Zero(1)

    def sample_jumps(self, eps, n, rng):
        sel = np.flatnonzero(self.norms > eps)
        if n and not len(sel):
            raise ValueError("no atoms above the truncation level")
        if not n:
            return np.zeros((0, self.dim))
        w = self.masses[sel] / self.masses[sel].sum()
        return self.points[sel[rng.choice(len(sel), size=n, p=w)]]


@dataclass(frozen=True, init=False)
class CompoundExponential(LevyMeasure):
    """``mass * prod_i rate_i exp(-rate_i z_i)``: finite activity, smooth density."""

    rates: tuple[float, ...]
    mass: float
    finite_activity = True

    def __init__(self, rates: Sequence[float], mass: float):
        rates = tuple(float(r) for r in np.atleast_1d(rates))
        if not rates or any(not r > 0 or not math.isfinite(r) for r in rates):
            raise ValueError("rates must be positive and finite")
        if not mass > 0 or not math.isfinite(mass):
            raise ValueError("mass must be positive and finite")
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "mass", float(mass))

    @property
    def dim(self) -> int:
        return len(self.rates)

    @cached_property
    def _lam(self) -> np.ndarray:
        return np.array(self.rates)

    def closed_form(self, functional):
        if functional in ("immigration", "branching"):
            return True
        # Euclidean shells are only elementary in one dimension
        return self.dim == 1 and functional in ("moment", "second_moment", "tail_mass")

    def immigration_integral(self, xi):
        xi = _orthant_vector(xi, self.dim)
        return (self.mass * (1.0 - np.prod(self._lam / (self._lam + xi), axis=-1)))[()]

    def branching_integral(self, xi):
        xi = _orthant_vector(xi, self.dim)
        lap = np.prod(self._lam / (self._lam + xi), axis=-1)
        return (self.mass * (lap - 1.0 + np.sum(xi / self._lam, axis=-1)))[()]

    def _shell(self, power: float, angular, lo: float, hi: float) -> Moment:
        """``int_{lo<|z|<=hi} |z|^power angular(theta) m(dz)`` with the radial part exact.

        Along a ray the density is ``mass * prod(rates) * exp(-r <rates, theta>)``, so
        the radial integral is an incomplete gamma function.
        """
        if hi <= lo:
            return 0.0, 0.0
        d = self.dim
        a = d + power
        c = self.mass * float(np.prod(self._lam)) * special.gamma(a)

        def g(theta: np.ndarray) -> float:
            s = float(self._lam @ theta)
            upper = 1.0 if math.isinf(hi) else special.gammainc(a, s * hi)
            lower = special.gammainc(a, s * lo) if lo > 0 else 0.0
            return angular(theta) * (upper - lower) / s**a

        if d == 1:
            return c * g(np.ones(1)), 0.0
        value, err = orthant_sphere_integral(g, d)
        return c * value, c * err

    def radial_moment(self, p, lo=0.0, hi=math.inf):
        if lo == 0.0 and math.isinf(hi):
            if p == 0:
                return self.mass, 0.0
            if p == 2:
                return self.mass * float(np.sum(2.0 / self._lam**2)), 0.0
        return self._shell(p, lambda th: 1.0, lo, hi)

    def coord_moment(self, k, lo=0.0, hi=math.inf):
        self._check_axis(k)
        if lo == 0.0 and math.isinf(hi):
            return self.mass / self.rates[k], 0.0
        return self._shell(1.0, lambda th: th[k], lo, hi)

    def second_moment(self, k, l, lo=0.0, hi=math.inf):
        self._check_axis(k)
        self._check_axis(l)
        if lo == 0.0 and math.isinf(hi):
            factor = 2.0 if k == l else 1.0
            return factor * self.mass / (self.rates[k] * self.rates[l]), 0.0
        return self._shell(2.0, lambda th: th[k] * th[l], lo, hi)

    def marginal(self, k):
        self._check_axis(k)
        return CompoundExponential((self.rates[k],), self.mass)

    def _draw(self, n, rng):
        return rng.exponential(1.0 / self._lam, size=(n, self.dim))

    def sample_jumps(self, eps, n, rng):
        out = np.empty((n, self.dim))
        filled = 0
        while filled < n:
            z = self._draw(max(2 * (n - filled), 16), rng)
            z = z[np.linalg.norm(z, axis=1) > eps][: n - filled]
            out[filled : filled + len(z)] = z
            filled += len(z)
        return out

    def poisson_events(self, eps, horizon, scale, rng):
        # thinning the full Poisson measure is exact and avoids the shell mass
        n = int(rng.poisson(horizon * scale * self.mass))
        times = np.sort(rng.uniform(0.0, horizon, n))
        z = self._draw(n, rng)
        keep = np.linalg.norm(z, axis=1) > eps
        return times[keep], z[keep]


@dataclass(frozen=True, init=False)
class Sum(LevyMeasure):
    parts: tuple[LevyMeasure, ...]

    def __init__(self, parts: Iterable[LevyMeasure]):
        parts = tuple(parts)
        if not parts:
            raise ValueError("empty sum; use Zero")
        if len({p.dim for p in parts}) != 1:
            raise ValueError("summands have inconsistent dimensions")
        object.__setattr__(self, "parts", parts)

    @property
    def dim(self) -> int:
        return self.parts[0].dim

    @property
    def finite_activity(self) -> bool:  # type: ignore[override]
        return all(p.finite_activity for p in self.parts)

    def closed_form(self, functional):
        return all(p.closed_form(functional) for p in self.parts)

    def _sum(self, name, *args) -> Moment:
        value = err = 0.0
        for part in self.parts:
            v, e = getattr(part, name)(*args)
            value += v
            err += e
        return value, err

    def immigration_integral(self, xi):
        return sum(p.immigration_integral(xi) for p in self.parts)

    def branching_integral(self, xi):
        return sum(p.branching_integral(xi) for p in self.parts)

    def radial_moment(self, p, lo=0.0, hi=math.inf):
        return self._sum("radial_moment", p, lo, hi)

    def coord_moment(self, k, lo=0.0, hi=math.inf):
        return self._sum("coord_moment", k, lo, hi)

    def second_moment(self, k, l, lo=0.0, hi=math.inf):
        return self._sum("second_moment", k, l, lo, hi)

    def tail_mass(self, eps):
        return sum(p.tail_mass(eps) for p in self.parts)

    def origin_mass(self):
        return sum(p.origin_mass() for p in self.parts)

    def marginal(self, k):
        parts = [p.marginal(k) for p in self.parts]
        parts = [p for p in parts if not isinstance(p, Zero)]
        if not parts:
            return Zero(1)
        return parts[0] if len(parts) == 1 else Sum(parts)

    def sample_jumps(self, eps, n, rng):
        masses = np.array([p.tail_mass(eps) for p in self.parts])
        counts = rng.multinomial(n, masses / masses.sum()) if n else np.zeros(len(masses), int)
        z = np.concatenate([p.sample_jumps(eps, int(c), rng) for p, c in zip(self.parts, counts)])
        return z[rng.permutation(n)]

    def poisson_events(self, eps, horizon, scale, rng):
        pieces = [p.poisson_events(eps, horizon, scale, rng) for p in self.parts]
        times = np.concatenate([t for t, _ in pieces])
        jumps = np.concatenate([z for _, z in pieces]).reshape(-1, self.dim)
        order = np.argsort(times, kind="stable")
        return times[order], jumps[order]


# ---------------------------------------------------------------------------
# functional interface
# ---------------------------------------------------------------------------


def immigration_integral(m: LevyMeasure, xi: Any) -> float:
    """``int (1 - exp(-<xi, z>)) m(dz)``."""
    return m.immigration_integral(xi)


def branching_integral(m: LevyMeasure, xi: Any) -> float:
    """``int (exp(-<xi, z>) - 1 + <xi, z>) m(dz)``."""
    return m.branching_integral(xi)


def moment(m: LevyMeasure, k: int, region: str = "full") -> float:
    """``int_region z_k m(dz)`` for region ``"small"`` (|z| <= 1), ``"large"`` or ``"full"``.

    Returns ``math.inf`` for a divergent integral; raises
    :class:`InconclusiveIntegral` when no certified value exists.
    """
    try:
        lo, hi = REGIONS[region]
    except KeyError:
        raise InconclusiveIntegral(f"unsupported region {region!r}") from None
    return m.coord_moment(k, lo, hi)[0]


def marginal(m: LevyMeasure, k: int) -> LevyMeasure:
    """Pushforward of ``m`` under ``z -> z_k`` with the mass at 0 removed."""
    return m.marginal(k)


def sample_large_jumps(
    m: LevyMeasure, eps: float, horizon: float, rng: np.random.Generator
) -> list[tuple[float, np.ndarray]]:
    """Jumps with ``|z| > eps`` of a Poisson measure with intensity ``dt m(dz)`` on ``[0, horizon]``."""
    if not eps > 0:
        raise ValueError("truncation level must be positive")
    times, jumps = m.poisson_events(eps, horizon, 1.0, rng)
    return list(zip(times.tolist(), jumps))


def small_jump_stats(
    m: LevyMeasure, k: int, l: int, eps: float, second_order: bool = True
) -> tuple[np.ndarray, float | None]:
    """Mean vector ``int_{|z|<=eps} z m(dz)`` and ``int_{|z|<=eps} z_k z_l m(dz)``.

    With ``second_order=False`` (immigration measures, which only need
    first-order integrability) the second moment is not computed.
    """
    mean = np.array([m.coord_moment(i, 0.0, eps)[0] for i in range(m.dim)])
    second = m.second_moment(k, l, 0.0, eps)[0] if second_order else None
    return mean, second


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------


def measure_from_dict(obj: Mapping[str, Any], dim: int) -> LevyMeasure:
    """Build a measure from its tagged-object form (see ``measure_to_dict``)."""
    kind = obj.get("type")
    if kind == "zero":
        return Zero(dim)
    if kind == "anisotropic_stable":
        return AnisotropicStable(dim, int(obj["axis"]), float(obj["alpha"]))
    if kind == "orthant_power_law":
        return OrthantPowerLaw(dim, float(obj["gamma"]), float(obj.get("scale", 1.0)))
    if kind == "atoms":
        atoms = [(row[:-1], row[-1]) for row in obj["atoms"]]
        if any(len(p) != dim for p, _ in atoms):
            raise ValueError(f"atom rows must have {dim} coordinates plus a mass")
        return FiniteAtomic(atoms)
    if kind == "compound_exponential":
        m = CompoundExponential(obj["rates"], float(obj["mass"]))
        if m.dim != dim:
            raise ValueError(f"compound_exponential needs {dim} rates")
        return m
    if kind == "sum":
        return Sum(measure_from_dict(p, dim) for p in obj["parts"])
    raise ValueError(f"unknown measure type {kind!r}")


def measure_to_dict(m: LevyMeasure) -> dict[str, Any]:
    if isinstance(m, Zero):
        return {"type": "zero"}
    if isinstance(m, AnisotropicStable):
        return {"type": "anisotropic_stable", "axis": m.axis, "alpha": m.alpha}
    if isinstance(m, OrthantPowerLaw):
        out: dict[str, Any] = {"type": "orthant_power_law", "gamma": m.gamma}
        if m.scale != 1.0:
            out["scale"] = m.scale
        return out
    if isinstance(m, FiniteAtomic):
        return {"type": "atoms", "atoms": [[*p, w] for p, w in m.atoms]}
    if isinstance(m, CompoundExponential):
        return {"type": "compound_exponential", "rates": list(m.rates), "mass": m.mass}
    if isinstance(m, Sum):
        return {"type": "sum", "parts": [measure_to_dict(p) for p in m.parts]}
    raise TypeError(f"cannot serialise {type(m).__name__}")
