"""Admissible parameter tuples ``(c, beta, B, nu, mu)`` of a multi-type CBI process."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .levy import InconclusiveIntegral, LevyMeasure, Zero, measure_from_dict, measure_to_dict

__all__ = [
    "StructureError",
    "AdmissibilityError",
    "Violation",
    "RawParams",
    "AdmissibleParams",
    "DriftMatrices",
    "find_violations",
    "validate",
    "drift_matrices",
    "bounded_variation_components",
    "params_from_dict",
    "params_to_dict",
]


class StructureError(ValueError):
    """Inconsistent dimensions or malformed input; distinct from inadmissibility."""


@dataclass(frozen=True)
class Violation:
    clause: str  # "(i)", "(ii)", "(iii)", "(iv)" or "(vi)"
    index: tuple[int, ...]
    message: str
    inconclusive: bool = False

    def __str__(self) -> str:
        tag = " [inconclusive]" if self.inconclusive else ""
        return f"{self.clause} at {self.index}: {self.message}{tag}"


class AdmissibilityError(ValueError):
    def __init__(self, violations: Sequence[Violation]):
        self.violations = list(violations)
        super().__init__("; ".join(map(str, self.violations)))


def _readonly(a: Any, shape: tuple[int, ...], name: str) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.shape != shape:
        raise StructureError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise StructureError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RawParams:
    """A structurally consistent but not yet validated parameter tuple."""

    c: np.ndarray
    beta: np.ndarray
    B: np.ndarray
    nu: LevyMeasure
    mu: tuple[LevyMeasure, ...]

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.ndim != 1 or len(c) < 1:
            raise StructureError("c must be a non-empty vector")
        d = len(c)
        object.__setattr__(self, "c", _readonly(c, (d,), "c"))
        object.__setattr__(self, "beta", _readonly(self.beta, (d,), "beta"))
        B = np.asarray(self.B, dtype=float)
        if B.shape == (d * d,):
            B = B.reshape(d, d)
        object.__setattr__(self, "B", _readonly(B, (d, d), "B"))
        mu = tuple(self.mu)
        if len(mu) != d:
            raise StructureError(f"mu must hold {d} measures, got {len(mu)}")
        for name, m in [("nu", self.nu), *((f"mu[{j}]", m) for j, m in enumerate(mu))]:
            if not isinstance(m, LevyMeasure):
                raise StructureError(f"{name} is not a supported measure")
            if m.dim != d:
                raise StructureError(f"{name} lives in dimension {m.dim}, expected {d}")
        object.__setattr__(self, "mu", mu)

    @property
    def dim(self) -> int:
        return len(self.c)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RawParams):
            return NotImplemented
        return (
            np.array_equal(self.c, other.c)
            and np.array_equal(self.beta, other.beta)
            and np.array_equal(self.B, other.B)
            and self.nu == other.nu
            and self.mu == other.mu
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class AdmissibleParams(RawParams):
    """A parameter tuple that passed :func:`validate`. Only build it through ``validate``."""


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def _coerce(raw: RawParams | Mapping[str, Any]) -> RawParams:
    if isinstance(raw, RawParams):
        return raw
    if isinstance(raw, Mapping):
        return params_from_dict(raw, validated=False)
    raise StructureError(f"cannot interpret {type(raw).__name__} as a parameter tuple")


def find_violations(raw: RawParams | Mapping[str, Any]) -> list[Violation]:
    """Every violated admissibility clause; empty when the tuple is admissible.

    Violations are accumulated rather than short-circuited. A moment integral
    that cannot be certified produces an ``inconclusive`` entry.
    """
    p = _coerce(raw)
    d = p.dim
    out: list[Violation] = []

    for j in range(d):
        if p.c[j] < 0:
            out.append(Violation("(i)", (j,), f"c_{j} = {p.c[j]} < 0"))
    for j in range(d):
        if p.beta[j] < 0:
            out.append(Violation("(ii)", (j,), f"beta_{j} = {p.beta[j]} < 0"))

    for j in range(d):
        for k in range(d):
            if k == j:
                continue
            try:
                m = p.mu[j].coord_moment(k)[0]
            except InconclusiveIntegral as exc:
                out.append(Violation("(iii)", (k, j), f"moment of z_{k} under mu_{j}: {exc}", True))
                continue
            if not p.B[k, j] - m >= 0:
                out.append(
                    Violation("(iii)", (k, j), f"b_{k}{j} - int z_{k} mu_{j} = {p.B[k, j]} - {m} < 0")
                )

    try:
        small = p.nu.radial_moment(1.0, 0.0, 1.0)[0] + p.nu.radial_moment(0.0, 1.0, math.inf)[0]
        if not math.isfinite(small):
            out.append(Violation("(iv)", (), "int (1 ^ |z|) nu(dz) diverges"))
    except InconclusiveIntegral as exc:
        out.append(Violation("(iv)", (), f"int (1 ^ |z|) nu(dz): {exc}", True))
    if p.nu.origin_mass() > 0:
        out.append(Violation("(iv)", (), "nu charges the origin"))

    for j in range(d):
        m = p.mu[j]
        try:
            total = m.radial_moment(2.0, 0.0, 1.0)[0] + m.radial_moment(1.0, 1.0, math.inf)[0]
            total += sum(m.coord_moment(k)[0] for k in range(d) if k != j)
            if not math.isfinite(total):
                out.append(
                    Violation("(vi)", (j,), f"int (|z|^|z|^2 + sum_(k!=j) z_k) mu_{j}(dz) diverges")
                )
        except InconclusiveIntegral as exc:
            out.append(Violation("(vi)", (j,), f"integrability of mu_{j}: {exc}", True))
        if m.origin_mass() > 0:
            out.append(Violation("(vi)", (j,), f"mu_{j} charges the origin"))
    return out


def validate(raw: RawParams | Mapping[str, Any]) -> AdmissibleParams:
    """Return the validated tuple or raise :class:`AdmissibilityError` listing all violations."""
    p = _coerce(raw)
    if isinstance(p, AdmissibleParams):
        return p
    violations = find_violations(p)
    if violations:
        raise AdmissibilityError(violations)
    return AdmissibleParams(p.c, p.beta, p.B, p.nu, p.mu)


# ---------------------------------------------------------------------------
# derived matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DriftMatrices:
    """Drift matrices derived from the branching measures.

    ``G[k, j] = b_kj - int z_k mu_j``; diagonal entries whose small-jump
    moment diverges are ``-inf`` and flagged in ``diag_infinite``.
    ``b_tilde`` only subtracts the large-jump moment on the diagonal.
    """

    G: np.ndarray
    b_tilde: np.ndarray
    theta: np.ndarray
    diag_infinite: tuple[bool, ...]
    error_bound: float = 0.0


def drift_matrices(p: AdmissibleParams) -> DriftMatrices:
    d = p.dim
    G = np.array(p.B, dtype=float)
    bt = np.array(p.B, dtype=float)
    err = 0.0
    infinite = []
    for j in range(d):
        for k in range(d):
            full, e1 = p.mu[j].coord_moment(k, 0.0, math.inf)
            err += e1
            G[k, j] -= full
            if k == j:
                large, e2 = p.mu[j].coord_moment(k, 1.0, math.inf)
                err += e2
                bt[k, j] -= large
            else:
                bt[k, j] -= full
        infinite.append(bool(math.isinf(G[j, j])))
    theta = np.diag(G).copy()
    for a in (G, bt, theta):
        a.setflags(write=False)
    return DriftMatrices(G, bt, theta, tuple(infinite), err)


def bounded_variation_components(p: AdmissibleParams) -> frozenset[int]:
    """Components with ``c_k = 0`` and a finite small-jump moment ``int_{|z|<=1} z_k mu_k``.

    A moment that cannot be certified excludes the component (with a warning),
    so downstream code never takes the bounded-variation branch by accident.
    """
    out = set()
    for k in range(p.dim):
        if p.c[k] != 0:
            continue
        try:
            small = p.mu[k].coord_moment(k, 0.0, 1.0)[0]
        except InconclusiveIntegral as exc:
            warnings.warn(f"component {k} excluded from bounded variation: {exc}", stacklevel=2)
            continue
        if math.isfinite(small):
            out.add(k)
    return frozenset(out)


# ---------------------------------------------------------------------------
# dict form (parameter files)
# ---------------------------------------------------------------------------


def params_from_dict(obj: Mapping[str, Any], validated: bool = True) -> RawParams:
    """Parse the parameter-file mapping: keys ``dim, c, beta, B, nu, mu``.

    ``B`` may be nested rows or a flat row-major list. ``nu`` and each entry
    of ``mu`` are tagged measure objects; missing measures default to zero.
    """
    try:
        d = int(obj["dim"])
        c = obj.get("c", [0.0] * d)
        beta = obj.get("beta", [0.0] * d)
        B = obj.get("B", [[0.0] * d for _ in range(d)])
        nu = measure_from_dict(obj.get("nu", {"type": "zero"}), d)
        mu_raw = obj.get("mu", [{"type": "zero"}] * d)
        mu = tuple(measure_from_dict(m, d) for m in mu_raw)
    except StructureError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise StructureError(f"malformed parameter mapping: {exc}") from exc
    if d < 1:
        raise StructureError("dim must be at least 1")
    if len(np.atleast_1d(c)) != d:
        raise StructureError(f"c must have {d} entries")
    raw = RawParams(c, beta, B, nu, mu)
    return validate(raw) if validated else raw


def params_to_dict(p: RawParams) -> dict[str, Any]:
    return {
        "dim": p.dim,
        "c": p.c.tolist(),
        "beta": p.beta.tolist(),
        "B": p.B.tolist(),
        "nu": measure_to_dict(p.nu),
        "mu": [measure_to_dict(m) for m in p.mu],
    }
