"""Boundary behaviour of the components of a CBI process.

Verdicts are sufficient conditions only. Binding verdicts come from exact
arguments (bounded variation, exponent certificates derived symbolically from
the measure families); the log-log slope diagnostic for the integral test is
a labelled heuristic that must agree with them.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
from scipy import linalg

from ._quadrature import InconclusiveIntegral, panel_integrals
from .levy import AnisotropicStable, LevyMeasure, OrthantPowerLaw, Sum, Zero
from .mechanisms import F_proj, ProjectedMechanism, R_proj, positivity_threshold, project
from .params import AdmissibleParams, bounded_variation_components, drift_matrices

__all__ = [
    "matrix_exponential",
    "affine_flow",
    "lower_bound_bv",
    "ExponentCertificate",
    "Verdict",
    "DivergenceDiagnostic",
    "ComponentReport",
    "ClassificationReport",
    "exponent_certificate",
    "check_non_extinction",
    "diagnose_divergence_eq04",
    "check_transience",
    "is_alpha_root",
    "classify",
    "SLOPE_MARGIN",
]

SLOPE_MARGIN = 0.05
DIVERGENCE_DECADES = 8
POINTS_PER_DECADE = 8
TRANSIENCE_FLOOR = 1e-12
CERT_SLACK = 1e-6  # relative slack on symbolic lower bounds of F^(k)
CERT_GRID = 64
CERT_SPAN = 1e6
EXPONENT_TIE = 1e-12


# ---------------------------------------------------------------------------
# bounded variation: deterministic lower bounds
# ---------------------------------------------------------------------------


def matrix_exponential(A: Any) -> np.ndarray:
    """``e^A`` by scaling and squaring with a Padé approximant."""
    return linalg.expm(np.asarray(A, dtype=float))


def affine_flow(A: np.ndarray, b: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
    """``(e^{tA}, int_0^t e^{sA} b ds)`` from one exponential of the augmented matrix.

    Works for singular ``A``; no inverse is formed.
    """
    d = len(b)
    M = np.zeros((d + 1, d + 1))
    M[:d, :d] = A
    M[:d, d] = b
    E = matrix_exponential(t * M)
    return E[:d, :d], E[:d, d]


def lower_bound_bv(p: AdmissibleParams, x: Any, t: float) -> np.ndarray:
    """``e^{tG} x + int_0^t e^{sG} beta ds``, a pathwise lower bound when every component has bounded variation."""
    bv = bounded_variation_components(p)
    if len(bv) != p.dim:
        missing = sorted(set(range(p.dim)) - bv)
        raise ValueError(f"components {missing} have unbounded variation; no linear lower bound")
    x = np.asarray(x, dtype=float)
    E, q = affine_flow(drift_matrices(p).G, p.beta, t)
    return E @ x + q


# ---------------------------------------------------------------------------
# exponent certificates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExponentCertificate:
    """``F^(k) >= C1 xi^gamma`` on ``[M1, inf)`` and ``R^(k) <= C2 xi^alpha`` on ``[M2, inf)``."""

    gamma: float
    C1: float
    M1: float
    alpha: float
    C2: float
    M2: float
    case: str  # "a": alpha < 1 + gamma, "b": alpha = 1 + gamma and gamma <= C1/C2
    lower_source: str
    upper_source: str


@dataclass(frozen=True)
class Verdict:
    status: str  # ProvenBV | ProvenIntegral | ProvenDrift | Unknown
    reason: str
    certificate: ExponentCertificate | None = None
    value: float | None = None  # b_kk for ProvenDrift, the integral for transience ProvenIntegral
    kappa: float | None = None

    @property
    def proven(self) -> bool:
        return self.status != "Unknown"


def _parts(m: LevyMeasure) -> tuple[LevyMeasure, ...]:
    return m.parts if isinstance(m, Sum) else (m,)


def _lower_bounds(pm: ProjectedMechanism) -> list[tuple[float, float, float, str]]:
    out = []
    if pm.beta > 0:
        out.append((1.0, pm.beta, 1.0, "beta"))
    for part in _parts(pm.nu):
        if isinstance(part, OrthantPowerLaw):
            out.append((part.gamma, part.axis_constant * (1 - CERT_SLACK), 1.0, "power-law immigration"))
    return out


def _upper_bound(pm: ProjectedMechanism) -> tuple[float, float, float, str] | None:
    # every term is coef * xi^e with e <= alpha, bounded by coef * xi^alpha on [1, inf)
    terms = [(1.0, max(0.0, -pm.b))]
    sources = []
    if pm.c > 0:
        terms.append((2.0, pm.c))
        sources.append("diffusion")
    for part in _parts(pm.mu):
        if isinstance(part, Zero):
            continue
        if isinstance(part, AnisotropicStable):
            terms.append((part.alpha, part.K))
            sources.append(f"stable({part.alpha:g})")
        elif part.finite_activity:
            # e^{-x} - 1 + x <= x
            terms.append((1.0, part.coord_moment(0)[0]))
        else:
            return None
    alpha = max(e for e, _ in terms)
    if alpha <= 1.0:
        return None
    return alpha, sum(c for _, c in terms), 1.0, "+".join(sources)


def _verify_certificate(pm: ProjectedMechanism, cert: ExponentCertificate) -> bool:
    g1 = np.geomspace(cert.M1, CERT_SPAN * cert.M1, CERT_GRID)
    g2 = np.geomspace(cert.M2, CERT_SPAN * cert.M2, CERT_GRID)
    lower_ok = np.all(F_proj(pm, g1) >= cert.C1 * g1**cert.gamma * (1 - 1e-12))
    upper_ok = np.all(R_proj(pm, g2) <= cert.C2 * g2**cert.alpha * (1 + 1e-12))
    return bool(lower_ok and upper_ok)


def exponent_certificate(pm: ProjectedMechanism) -> ExponentCertificate | None:
    """A grid-verified certificate for the integral test, or ``None``.

    Bounds are derived from the measure families, not fitted.
    """
    upper = _upper_bound(pm)
    if upper is None:
        return None
    alpha, C2, M2, usrc = upper
    for gamma, C1, M1, lsrc in sorted(_lower_bounds(pm), reverse=True):
        if alpha < 1 + gamma - EXPONENT_TIE:
            case = "a"
        elif abs(alpha - (1 + gamma)) <= EXPONENT_TIE and gamma <= C1 / C2:
            case = "b"
        else:
            continue
        cert = ExponentCertificate(gamma, C1, M1, alpha, C2, M2, case, lsrc, usrc)
        if _verify_certificate(pm, cert):
            return cert
    return None


def _small_moment_infinite(p: AdmissibleParams, k: int) -> bool:
    try:
        return math.isinf(p.mu[k].coord_moment(k, 0.0, 1.0)[0])
    except InconclusiveIntegral:
        return False


def _certificate_kappa(pm: ProjectedMechanism, kappa0: float, cert: ExponentCertificate) -> float:
    kappa = max(kappa0, cert.M1, cert.M2)
    while not R_proj(pm, kappa) > 0:
        kappa *= 1 + 1e-6
    return kappa


def check_non_extinction(p: AdmissibleParams, x: Any, k: int) -> Verdict:
    """Non-extinction verdict for component ``k``; ``kappa`` is set when a threshold was computed."""
    x = np.asarray(x, dtype=float)
    if x.shape != (p.dim,) or np.any(x < 0):
        raise ValueError("x must be a vector in the nonnegative orthant")
    if k in bounded_variation_components(p):
        if x[k] > 0 or p.beta[k] > 0:
            why = "x_k > 0" if x[k] > 0 else "beta_k > 0"
            return Verdict("ProvenBV", f"bounded variation and {why}")
        return Verdict("Unknown", "bounded variation but x_k = 0 and beta_k = 0")
    if not (p.c[k] > 0 or _small_moment_infinite(p, k)):
        return Verdict("Unknown", "neither c_k > 0 nor an infinite small-jump moment")
    pm = project(p, k)
    kappa0 = positivity_threshold(pm)
    if kappa0 is None:
        return Verdict("Unknown", "R^(k) is not positive on the scanned range")
    if not x[k] > 0:
        return Verdict("Unknown", "integral test needs x_k > 0", kappa=kappa0)
    cert = exponent_certificate(pm)
    if cert is None:
        return Verdict("Unknown", "no exponent certificate applies", kappa=kappa0)
    kappa = _certificate_kappa(pm, kappa0, cert)
    return Verdict("ProvenIntegral", f"exponent certificate, case ({cert.case})", cert, kappa=kappa)


# ---------------------------------------------------------------------------
# integral diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DivergenceDiagnostic:
    verdict: str  # Diverges | Converges | Inconclusive
    slope: float
    slope_lower_decade: float
    slope_upper_decade: float
    kappa: float
    reason: str = ""


def _ratio(pm: ProjectedMechanism):
    def f(u: np.ndarray) -> np.ndarray:
        return F_proj(pm, u) / R_proj(pm, u)

    return f


def _cumulative(pm: ProjectedMechanism, edges: np.ndarray) -> np.ndarray:
    """``int F/R`` between ``edges[0]`` and ``edges[i]`` for every ``i``; ``edges`` is monotone."""
    rising = edges[-1] > edges[0]
    pieces = panel_integrals(_ratio(pm), edges if rising else edges[::-1])
    if not rising:
        pieces = pieces[::-1]
    return np.concatenate([[0.0], np.cumsum(pieces)])


def _fit(logx: np.ndarray, logy: np.ndarray) -> float:
    return float(np.polyfit(logx, logy, 1)[0])


def diagnose_divergence_eq04(
    pm: ProjectedMechanism,
    kappa: float,
    margin: float = SLOPE_MARGIN,
    decades: int = DIVERGENCE_DECADES,
    per_decade: int = POINTS_PER_DECADE,
) -> DivergenceDiagnostic:
    """Heuristic for ``int_kappa^inf exp(int_kappa^xi F/R du) / R(xi) dxi = inf``.

    The log of the integrand is tracked on a geometric grid up to
    ``10^decades * kappa`` and its log-log slope fitted on the top two
    decades. Slope ``>= -1 + margin`` reads as divergence; slope
    ``<= -1 - margin`` that is consistent across both decades reads as
    convergence. An inner integral that overflows is reported as divergence,
    since the integrand then grows without bound.
    """
    if not R_proj(pm, kappa) > 0:
        raise ValueError("R^(k) must be positive at kappa")
    grid = np.geomspace(kappa, kappa * 10.0**decades, decades * per_decade + 1)
    try:
        with np.errstate(over="raise"):
            inner = _cumulative(pm, grid)
    except (InconclusiveIntegral, FloatingPointError):
        return DivergenceDiagnostic("Diverges", math.inf, math.inf, math.inf, kappa, "inner integral overflow")
    if not np.all(np.isfinite(inner)):
        return DivergenceDiagnostic("Diverges", math.inf, math.inf, math.inf, kappa, "inner integral overflow")
    log_g = inner - np.log(R_proj(pm, grid))
    logx = np.log(grid)
    top = slice(-2 * per_decade - 1, None)
    lower = slice(-2 * per_decade - 1, -per_decade)
    upper = slice(-per_decade - 1, None)
    slope = _fit(logx[top], log_g[top])
    s_lo = _fit(logx[lower], log_g[lower])
    s_hi = _fit(logx[upper], log_g[upper])
    if slope >= -1 + margin:
        verdict = "Diverges"
    elif slope <= -1 - margin and abs(s_hi - s_lo) <= margin:
        verdict = "Converges"
    else:
        verdict = "Inconclusive"
    return DivergenceDiagnostic(verdict, slope, s_lo, s_hi, kappa)


def _positive_on_half_line(pm: ProjectedMechanism) -> tuple[bool, str]:
    # R^(k)(xi)/xi is nondecreasing with limit -b at 0+
    if pm.b > 0:
        return False, "R^(k)'(0+) = -b_kk < 0, so R^(k) < 0 near 0"
    grid = np.geomspace(1e-9, 1.0, 64)
    if not np.all(R_proj(pm, grid) > 0):
        return False, "R^(k) is not positive on [1e-9, 1]"
    if pm.b == 0 and pm.c == 0 and isinstance(pm.mu, Zero):
        return False, "R^(k) vanishes identically"
    return True, ""


def _exp_rule(u: np.ndarray, L: np.ndarray) -> float:
    """``int exp(L) du`` over a decreasing uniform grid with ``L`` linear on each cell."""
    du = u[0] - u[1]
    dL = L[:-1] - L[1:]
    w_hi, w_lo = np.exp(L[:-1]), np.exp(L[1:])
    small = np.abs(dL) < 1e-8
    cells = np.where(small, 0.5 * (w_hi + w_lo), (w_hi - w_lo) / np.where(small, 1.0, dL))
    return float(du * np.sum(cells))


def check_transience(
    pm: ProjectedMechanism,
    alpha_root: bool = False,
    margin: float = SLOPE_MARGIN,
    floor: float = TRANSIENCE_FLOOR,
    per_decade: int = 16,
) -> Verdict:
    """Transience verdict for one component.

    Requires ``R^(k) > 0`` on ``(0, inf)``. With ``b_kk <= 0`` the integral
    ``int_0^1 exp(-int_xi^1 F/R du) dxi / R(xi)`` is evaluated on a geometric
    grid down to ``floor`` (a rule exact for piecewise power laws) and the
    integrand exponent is fitted on the last two decades; exponents above
    ``-1 + margin`` that do not fall toward 0 give a finite value, with the
    remainder below ``floor`` added from the fitted power.

    For the anisotropic stable family a positive ``b_kk`` is accepted
    directly (``alpha_root=True``), although ``R^(k) < 0`` near 0 there.
    """
    if pm.b > 0 and alpha_root:
        return Verdict(
            "ProvenDrift",
            "b_kk > 0 for the anisotropic stable family; note R^(k) < 0 near 0, "
            "so the positivity hypothesis on (0, inf) is not met literally",
            value=pm.b,
        )
    if per_decade % 2:
        raise ValueError("per_decade must be even")
    ok, why = _positive_on_half_line(pm)
    if not ok:
        return Verdict("Unknown", f"positivity hypothesis fails: {why}")
    if pm.b > 0:
        return Verdict("ProvenDrift", "b_kk > 0", value=pm.b)
    decades = int(round(-math.log10(floor)))
    grid = np.geomspace(1.0, floor, decades * per_decade + 1)  # decreasing
    try:
        J = _cumulative(pm, grid)
    except InconclusiveIntegral as exc:
        return Verdict("Unknown", f"inner integral not certified: {exc}")
    log_h = -J - np.log(R_proj(pm, grid))
    u = np.log(grid)
    # int h dxi = int exp(L(u)) du with L = log h + u; L is taken piecewise
    # linear in u, which is exact for power laws
    L = log_h + u
    # the rule is second order off power laws; one Richardson step against the half grid
    body = (4.0 * _exp_rule(u, L) - _exp_rule(u[::2], L[::2])) / 3.0
    m = per_decade
    p_all = _fit(u[-2 * m - 1 :], log_h[-2 * m - 1 :])
    p_hi = _fit(u[-2 * m - 1 : -m], log_h[-2 * m - 1 : -m])
    p_lo = _fit(u[-m - 1 :], log_h[-m - 1 :])
    # the exponent must clear -1 on both decades and must not drift down toward 0;
    # an exponent that grows toward 0 means faster decay
    if not (min(p_hi, p_lo) > -1 + margin and p_lo >= p_hi - margin):
        return Verdict("Unknown", f"integrand exponent near 0 is {p_all:.3f}; integral not shown finite")
    tail = math.exp(log_h[-1]) * floor / (p_lo + 1)
    return Verdict("ProvenIntegral", f"integrand ~ xi^{p_lo:.3f} near 0", value=float(body + tail))


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def is_alpha_root(p: AdmissibleParams) -> bool:
    """``c = 0`` and each ``mu_j`` is an anisotropic stable measure on axis ``j``."""
    return bool(np.all(p.c == 0)) and all(
        isinstance(m, AnisotropicStable) and m.axis == j for j, m in enumerate(p.mu)
    )


@dataclass(frozen=True)
class ComponentReport:
    k: int
    variation: str  # bounded | unbounded
    non_extinction: Verdict
    transience: Verdict
    kappa: float | None
    divergence: DivergenceDiagnostic | None


@dataclass(frozen=True)
class ClassificationReport:
    components: tuple[ComponentReport, ...]
    interior_supported: bool
    transient: bool
    config: dict[str, float] = field(default_factory=dict)
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        def clean(v: Any) -> Any:
            if isinstance(v, float) and not math.isfinite(v):
                return str(v)
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [clean(x) for x in v]
            return v

        return clean(asdict(self))


def classify(p: AdmissibleParams, x: Any) -> ClassificationReport:
    x = np.asarray(x, dtype=float)
    if x.shape != (p.dim,) or np.any(x < 0):
        raise ValueError("x must be a vector in the nonnegative orthant")
    bv = bounded_variation_components(p)
    root = is_alpha_root(p)
    comps = []
    notes = []
    for k in range(p.dim):
        pm = project(p, k)
        nonext = check_non_extinction(p, x, k)
        kappa = nonext.kappa
        diag = None
        if k not in bv:
            if kappa is None or not R_proj(pm, kappa) > 0:
                k0 = positivity_threshold(pm) if kappa is None else kappa
                if k0 is not None:
                    kappa = max(k0, 1.0)
                    while not R_proj(pm, kappa) > 0:
                        kappa *= 1 + 1e-6
            if kappa is not None:
                diag = diagnose_divergence_eq04(pm, kappa)
                if nonext.status == "ProvenIntegral" and diag.verdict == "Converges":
                    notes.append(f"component {k}: diagnostic contradicts the certificate")
        trans = check_transience(pm, alpha_root=root)
        if root and pm.b > 0:
            notes.append(
                f"component {k}: transience from b_kk > 0 (anisotropic stable family) although "
                "R^(k) < 0 near 0"
            )
        comps.append(
            ComponentReport(k, "bounded" if k in bv else "unbounded", nonext, trans, kappa, diag)
        )
    interior = all(c.non_extinction.proven for c in comps) and bool(np.all(x > 0))
    transient = all(c.transience.proven for c in comps)
    config = {
        "slope_margin": SLOPE_MARGIN,
        "divergence_decades": DIVERGENCE_DECADES,
        "points_per_decade": POINTS_PER_DECADE,
        "transience_floor": TRANSIENCE_FLOOR,
        "certificate_slack": CERT_SLACK,
    }
    return ClassificationReport(tuple(comps), interior, transient, config, tuple(notes))
