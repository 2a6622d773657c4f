import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from cbi.boundary import (
    CERT_GRID,
    CERT_SPAN,
    affine_flow,
    check_non_extinction,
    check_transience,
    classify,
    diagnose_divergence_eq04,
    exponent_certificate,
    is_alpha_root,
    lower_bound_bv,
    matrix_exponential,
)
from cbi.levy import AnisotropicStable, FiniteAtomic, OrthantPowerLaw
from cbi.mechanisms import F_proj, R_proj, project, stable_constant
from cbi.params import validate
from models import alpha_root, feller, finite_activity, linear, raw


def stable_power_1d(alpha, gamma, b=0.0, scale=1.0, beta=0.0):
    return validate(raw([0.0], [beta], [[b]], nu=OrthantPowerLaw(1, gamma, scale), mu=[AnisotropicStable(1, 0, alpha)]))


# --- matrix exponential ------------------------------------------------------------------


def test_exponential_of_zero_and_diagonal():
    assert np.array_equal(matrix_exponential(np.zeros((3, 3))), np.eye(3))
    assert matrix_exponential(np.eye(2)) == pytest.approx(np.diag([math.e, math.e]), rel=1e-15)


def test_exponential_of_nilpotent():
    assert matrix_exponential([[0.0, 1.0], [0.0, 0.0]]) == pytest.approx(np.array([[1.0, 1.0], [0.0, 1.0]]), abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=16, max_size=16), st.floats(0.0, 2.0))
def test_exponential_inverse_identity(entries, radius):
    A = np.array(entries).reshape(4, 4)
    rho = np.max(np.abs(np.linalg.eigvals(A)))
    if rho > 0:
        A *= radius / rho
    assert np.max(np.abs(matrix_exponential(A) @ matrix_exponential(-A) - np.eye(4))) <= 1e-10


def test_affine_flow_matches_inverse_formula_when_invertible():
    G = np.array([[-1.0, 0.5], [0.2, -0.7]])
    beta = np.array([0.3, 1.1])
    E, q = affine_flow(G, beta, 2.5)
    assert q == pytest.approx(np.linalg.solve(G, (E - np.eye(2)) @ beta), rel=1e-12)


# --- bounded-variation lower bound ----------------------------------------------------------


def test_lower_bound_without_drift_is_linear_growth():
    p = validate(raw([0.0, 0.0], [0.5, 2.0], np.zeros((2, 2))))
    assert lower_bound_bv(p, [1.0, 3.0], 2.0) == pytest.approx([2.0, 7.0], rel=1e-14)


def test_lower_bound_diagonal_matches_scalar_formula():
    # G = B - diag(int z mu_k) is diagonal here
    mu = [FiniteAtomic([((1.0, 0.0), 0.5)]), FiniteAtomic([((0.0, 2.0), 0.25)])]
    p = validate(raw([0.0, 0.0], [0.4, 0.1], [[0.2, 0.0], [0.0, -0.3]], mu=mu))
    theta = np.array([0.2 - 0.5, -0.3 - 0.5])
    x, t = np.array([1.0, 2.0]), 1.7
    expected = np.exp(theta * t) * x + p.beta * (np.exp(theta * t) - 1) / theta
    assert lower_bound_bv(p, x, t) == pytest.approx(expected, rel=1e-13)


def test_lower_bound_nilpotent_drift():
    p = validate(raw([0.0, 0.0], [0.0, 1.0], [[0.0, 1.0], [0.0, 0.0]]))
    assert lower_bound_bv(p, [0.0, 0.0], 1.0) == pytest.approx([0.5, 1.0], rel=1e-14)


def test_lower_bound_refused_for_unbounded_variation():
    with pytest.raises(ValueError):
        lower_bound_bv(alpha_root(), [1.0, 1.0], 1.0)
    with pytest.raises(ValueError):
        lower_bound_bv(feller(beta=1.0), [1.0], 1.0)


# --- certificates and non-extinction -----------------------------------------------------------


def test_stable_root_case_a():
    v = check_non_extinction(alpha_root((1.3, 1.3), gamma=0.5), [1.0, 1.0], 0)
    assert v.status == "ProvenIntegral"
    assert v.certificate.case == "a"
    assert (v.certificate.alpha, v.certificate.gamma) == (1.3, 0.5)


def test_stable_root_without_a_case():
    v = check_non_extinction(alpha_root((1.8, 1.8), gamma=0.5), [1.0, 1.0], 0)
    assert v.status == "Unknown"


def test_finite_activity_with_immigration_is_bv_proven():
    p = finite_activity()
    for k in range(2):
        assert check_non_extinction(p, [0.0, 0.0], k).status == "ProvenBV"


def test_bv_needs_start_or_immigration():
    p = validate(raw([0.0], [0.0], [[-1.0]], mu=[FiniteAtomic([((1.0,), 1.0)])]))
    assert check_non_extinction(p, [0.0], 0).status == "Unknown"
    assert check_non_extinction(p, [0.5], 0).status == "ProvenBV"


@pytest.mark.parametrize("beta,c,proven", [(1.0, 1.0, True), (2.0, 1.0, True), (0.5, 1.0, False), (0.99, 1.0, False)])
def test_square_root_diffusion_matches_the_feller_condition(beta, c, proven):
    # dX = beta dt + sqrt(2 c X) dW stays positive iff beta >= c
    v = check_non_extinction(feller(c=c, beta=beta), [1.0], 0)
    assert (v.status == "ProvenIntegral") == proven
    if proven:
        assert v.certificate.case == "b"


def test_integral_test_needs_positive_start():
    v = check_non_extinction(alpha_root((1.3, 1.3)), [0.0, 1.0], 0)
    assert v.status == "Unknown" and "x_k > 0" in v.reason


def test_immigration_drift_certificate_for_stable_branching():
    # beta > 0 gives gamma = 1 and alpha = 1.8 < 2
    v = check_non_extinction(stable_power_1d(1.8, 0.5, beta=0.3), [1.0], 0)
    assert v.status == "ProvenIntegral" and v.certificate.gamma == 1.0


def test_negative_state_is_a_domain_error():
    with pytest.raises(ValueError):
        check_non_extinction(alpha_root(), [1.0, -1.0], 0)


CERTIFIED = [
    project(alpha_root((1.3, 1.45), gamma=0.5, b_diag=0.7), 0),
    project(alpha_root((1.3, 1.45), gamma=0.5, b_diag=-0.4), 1),
    project(feller(c=1.0, beta=1.5, b=-0.3), 0),
    project(stable_power_1d(1.6, 0.7, b=1.0, scale=0.3), 0),
]


@pytest.mark.parametrize("pm", CERTIFIED)
def test_certificate_bounds_hold_on_the_grid(pm):
    cert = exponent_certificate(pm)
    assert cert is not None
    g1 = np.geomspace(cert.M1, CERT_SPAN * cert.M1, CERT_GRID)
    g2 = np.geomspace(cert.M2, CERT_SPAN * cert.M2, CERT_GRID)
    assert np.all(F_proj(pm, g1) >= cert.C1 * g1**cert.gamma)
    assert np.all(R_proj(pm, g2) <= cert.C2 * g2**cert.alpha * (1 + 1e-12))
    assert cert.alpha < 1 + cert.gamma or (cert.case == "b" and cert.gamma <= cert.C1 / cert.C2)


def test_certificate_kappa_is_a_positivity_point():
    v = check_non_extinction(alpha_root((1.3, 1.3), b_diag=2.0), [1.0, 1.0], 0)
    assert v.status == "ProvenIntegral"
    pm = project(alpha_root((1.3, 1.3), b_diag=2.0), 0)
    assert R_proj(pm, v.kappa) > 0
    assert v.kappa >= max(v.certificate.M1, v.certificate.M2)


# --- divergence diagnostic ------------------------------------------------------------------


def test_diagnostic_converges_for_pure_quadratic():
    d = diagnose_divergence_eq04(project(feller(), 0), 1.0)
    assert d.verdict == "Converges"
    assert d.slope == pytest.approx(-2.0, abs=1e-6)


def test_diagnostic_diverges_under_case_a():
    pm = project(alpha_root((1.3, 1.3), gamma=0.5), 0)
    d = diagnose_divergence_eq04(pm, 1.0)
    assert d.verdict == "Diverges"


def test_diagnostic_on_the_exact_boundary_case_defers_to_the_certificate():
    alpha, gamma = 1.5, 0.5
    K = stable_constant(alpha)
    unit = OrthantPowerLaw(1, gamma).axis_constant
    # C1 / C2 slightly above gamma: the certificate fires, the fitted slope sits at -1
    scale = gamma * K / unit * (1 + 1e-4)
    p = stable_power_1d(alpha, gamma, scale=scale)
    v = check_non_extinction(p, [1.0], 0)
    assert v.status == "ProvenIntegral" and v.certificate.case == "b"
    d = diagnose_divergence_eq04(project(p, 0), v.kappa)
    assert d.verdict == "Inconclusive"
    assert d.slope == pytest.approx(-1.0, abs=1e-3)
    report = classify(p, [1.0])
    assert report.interior_supported
    assert not any("contradicts" in n for n in report.notes)


def test_diagnostic_overflow_reads_as_divergence():
    # F / R ~ xi^{-0.5}: the inner integral grows like sqrt(xi) and overflows exp
    pm = project(stable_power_1d(1.1, 0.6, scale=50.0), 0)
    d = diagnose_divergence_eq04(pm, 1.0)
    assert d.verdict == "Diverges"


def test_diagnostic_needs_positive_r():
    with pytest.raises(ValueError):
        diagnose_divergence_eq04(project(feller(b=2.0), 0), 1.0)


# --- transience -------------------------------------------------------------------------------


def test_positive_drift_root_is_unknown_when_read_literally():
    pm = project(stable_power_1d(1.5, 0.5, b=1.0), 0)
    v = check_transience(pm)
    assert v.status == "Unknown" and "positivity" in v.reason


def test_positive_drift_root_with_the_family_rule():
    pm = project(stable_power_1d(1.5, 0.5, b=1.0), 0)
    v = check_transience(pm, alpha_root=True)
    assert v.status == "ProvenDrift" and v.value == 1.0


@pytest.mark.parametrize("beta,expected", [(2.0, 1.0), (3.0, 0.5), (1.5, 2.0)])
def test_pure_quadratic_transience_integral(beta, expected):
    # F/R = beta / xi, so the integrand is xi^{beta - 2}
    v = check_transience(project(feller(c=1.0, beta=beta), 0))
    assert v.status == "ProvenIntegral"
    assert v.value == pytest.approx(expected, rel=1e-9)


@pytest.mark.parametrize("beta", [0.5, 1.0])
def test_weak_immigration_is_not_shown_transient(beta):
    assert check_transience(project(feller(c=1.0, beta=beta), 0)).status == "Unknown"


def test_harmonic_divergence_is_unknown():
    assert check_transience(project(linear(-1.0), 0)).status == "Unknown"


def test_vanishing_branching_is_unknown():
    assert check_transience(project(linear(0.0, beta=1.0), 0)).status == "Unknown"


@pytest.mark.parametrize("alpha,gamma", [(1.8, 0.5), (1.9, 0.3), (1.5, 0.2)])
def test_transience_integral_against_quadrature(alpha, gamma):
    p = stable_power_1d(alpha, gamma)
    C, K = p.nu.axis_constant, stable_constant(alpha)
    e = 1 + gamma - alpha  # F/R = (C/K) u^{e - 1}, e < 0

    def h(x):
        return math.exp(-(C / K) * (1 - x**e) / e) / (K * x**alpha)

    ref, _ = integrate.quad(h, 0, 1, epsabs=1e-14, epsrel=1e-12, limit=200)
    v = check_transience(project(p, 0))
    assert v.status == "ProvenIntegral"
    assert v.value == pytest.approx(ref, rel=1e-5)


def test_transience_grid_must_split_in_halves():
    with pytest.raises(ValueError):
        check_transience(project(feller(beta=2.0), 0), per_decade=15)


# --- classification -------------------------------------------------------------------------------


def test_root_family_is_interior_supported():
    p = alpha_root((1.2, 1.4), gamma=0.5)
    assert is_alpha_root(p)
    report = classify(p, [1.0, 1.0])
    assert report.interior_supported
    assert all(c.non_extinction.status == "ProvenIntegral" for c in report.components)
    assert all(c.divergence.verdict == "Diverges" for c in report.components)
    assert all(c.variation == "unbounded" for c in report.components)


def test_feller_without_certificate_is_unknown():
    report = classify(feller(beta=0.5), [1.0])
    assert report.components[0].non_extinction.status == "Unknown"
    assert not report.interior_supported


def test_mixed_report_has_no_aggregate_flag():
    p = validate(raw([0.0, 1.0], [1.0, 0.0], np.zeros((2, 2))))
    report = classify(p, [1.0, 1.0])
    assert report.components[0].non_extinction.status == "ProvenBV"
    assert report.components[1].non_extinction.status == "Unknown"
    assert not report.interior_supported


def test_interior_flag_needs_interior_start():
    p = finite_activity()
    assert classify(p, [1.0, 1.0]).interior_supported
    assert not classify(p, [0.0, 1.0]).interior_supported


def test_positive_drift_root_is_transient_with_a_note():
    report = classify(alpha_root((1.3, 1.4), b_diag=0.5), [1.0, 1.0])
    assert report.transient
    assert all(c.transience.status == "ProvenDrift" for c in report.components)
    assert len(report.notes) == 2


def test_report_is_json_ready():
    report = classify(alpha_root((1.3, 1.9), b_diag=0.2), [1.0, 2.0])
    text = json.dumps(report.to_dict(), allow_nan=False)
    back = json.loads(text)
    assert back["components"][0]["non_extinction"]["status"] == "ProvenIntegral"
    assert back["config"]["slope_margin"] == 0.05


def test_report_kappa_is_positive_for_r():
    p = alpha_root((1.3, 1.9), b_diag=0.2)
    report = classify(p, [1.0, 2.0])
    for c in report.components:
        assert R_proj(project(p, c.k), c.kappa) > 0
