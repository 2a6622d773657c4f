import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from cbi.levy import (
    AnisotropicStable,
    CompoundExponential,
    FiniteAtomic,
    InconclusiveIntegral,
    OrthantPowerLaw,
    Sum,
    Zero,
    branching_integral,
    immigration_integral,
    marginal,
    measure_from_dict,
    measure_to_dict,
    moment,
    sample_large_jumps,
    small_jump_stats,
    stable_constant,
)

positive = st.floats(0.01, 20.0)


def gamma_oracle(alpha):
    return special.gamma(2 - alpha) / (alpha * (alpha - 1))


# --- immigration_integral ---------------------------------------------------


def test_zero_measure_integrals_vanish():
    z = Zero(3)
    assert immigration_integral(z, [1.0, 2.0, 3.0]) == 0
    assert branching_integral(z, [1.0, 2.0, 3.0]) == 0


def test_single_atom_immigration():
    m = FiniteAtomic([((1.0,), 2.0)])
    assert immigration_integral(m, [math.log(2)]) == pytest.approx(1.0, rel=1e-15)


def test_power_law_projected_scaling_ratio():
    m = OrthantPowerLaw(2, 0.5)
    ratio = immigration_integral(m, [4.0, 0.0]) / immigration_integral(m, [1.0, 0.0])
    assert ratio == pytest.approx(2.0, rel=1e-12)


def test_power_law_axis_constant_against_polar_quadrature():
    # d = 2: int (1 - e^{-z_1}) |z|^{-2-g} dz in polar coordinates, radial part in closed form
    g = 0.5
    m = OrthantPowerLaw(2, g)
    radial = special.gamma(1 - g) / g
    angular, _ = integrate.quad(lambda phi: math.cos(phi) ** g, 0, math.pi / 2)
    assert m.axis_constant == pytest.approx(radial * angular, rel=1e-9)


def test_power_law_off_axis_argument_uses_sphere_quadrature():
    m = OrthantPowerLaw(2, 0.4, 2.0)
    xi = np.array([1.0, 3.0])
    # same radial reduction with the direction-dependent factor <xi, theta>^g
    radial = special.gamma(1 - 0.4) / 0.4
    angular, _ = integrate.quad(lambda p: (xi[0] * math.cos(p) + xi[1] * math.sin(p)) ** 0.4, 0, math.pi / 2)
    assert immigration_integral(m, xi) == pytest.approx(2.0 * radial * angular, rel=1e-8)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3), st.floats(0.05, 0.95), st.lists(st.floats(0.0, 10.0), min_size=3, max_size=3))
def test_power_law_scaling_law(d, g, xs):
    xi = np.array(xs[:d])
    if not xi.any():
        xi[0] = 1.0
    m = OrthantPowerLaw(d, g)
    assert immigration_integral(m, 2 * xi) == pytest.approx(2**g * immigration_integral(m, xi), rel=1e-8)


def test_negative_argument_is_a_domain_error():
    with pytest.raises(ValueError):
        immigration_integral(FiniteAtomic([((1.0,), 1.0)]), [-1.0])
    with pytest.raises(ValueError):
        branching_integral(AnisotropicStable(2, 0, 1.5), [1.0, -0.1])


def test_stable_immigration_is_infinite():
    assert immigration_integral(AnisotropicStable(1, 0, 1.5), [1.0]) == math.inf
    assert immigration_integral(AnisotropicStable(2, 0, 1.5), [0.0, 1.0]) == 0.0


def test_compound_exponential_immigration_closed_form():
    m = CompoundExponential((2.0, 3.0), 1.5)
    xi = np.array([0.7, 1.1])
    expected = 1.5 * (1 - (2 / 2.7) * (3 / 4.1))
    assert immigration_integral(m, xi) == pytest.approx(expected, rel=1e-13)


# --- branching_integral -----------------------------------------------------


def test_stable_branching_at_unit_argument():
    assert branching_integral(AnisotropicStable(2, 0, 1.5), [1.0, 5.0]) == pytest.approx(2.3632718, abs=5e-8)


def test_single_atom_branching():
    assert branching_integral(FiniteAtomic([((1.0,), 1.0)]), [1.0]) == pytest.approx(math.exp(-1), rel=1e-14)


def test_compound_exponential_branching_against_quadrature():
    m = CompoundExponential((2.0,), 3.0)
    f = lambda z: (math.exp(-1.3 * z) - 1 + 1.3 * z) * 3.0 * 2.0 * math.exp(-2.0 * z)
    ref, _ = integrate.quad(f, 0, math.inf)
    assert branching_integral(m, [1.3]) == pytest.approx(ref, rel=1e-10)


FAMILIES = [
    AnisotropicStable(2, 1, 1.7),
    FiniteAtomic([((0.2, 1.0), 1.0), ((3.0, 0.0), 0.5)]),
    CompoundExponential((1.0, 2.0), 2.0),
    Sum([AnisotropicStable(2, 0, 1.2), FiniteAtomic([((1.0, 1.0), 1.0)])]),
]


@pytest.mark.parametrize("m", FAMILIES, ids=lambda m: type(m).__name__)
def test_branching_integral_is_convex_and_nonnegative_along_rays(m):
    rng = np.random.default_rng(1)
    for _ in range(5):
        direction = rng.uniform(0, 1, 2)
        s = np.linspace(0, 10, 201)
        vals = np.array([branching_integral(m, si * direction) for si in s])
        assert vals[0] == 0
        assert np.all(vals >= 0)
        assert np.all(np.diff(vals, 2) >= -1e-10 * (1 + np.abs(vals[1:-1])))


# --- moment -------------------------------------------------------------------


def test_stable_moments():
    m = AnisotropicStable(2, 0, 1.5)
    assert moment(m, 0, "small") == math.inf
    assert moment(m, 0, "large") == pytest.approx(2.0, rel=1e-15)
    for region in ("small", "large", "full"):
        assert moment(m, 1, region) == 0.0


def test_unsupported_region_is_inconclusive():
    with pytest.raises(InconclusiveIntegral):
        moment(Zero(1), 0, "tiny")


def test_power_law_moments_decided_by_exponents():
    m = OrthantPowerLaw(2, 0.5)
    assert moment(m, 0, "small") < math.inf
    assert moment(m, 0, "large") == math.inf


def test_atom_moments_split_by_norm():
    m = FiniteAtomic([((0.3, 0.4), 2.0), ((3.0, 4.0), 1.0)])
    assert moment(m, 1, "small") == pytest.approx(0.8)
    assert moment(m, 1, "large") == pytest.approx(4.0)
    assert moment(m, 0, "full") == pytest.approx(3.6)


def test_compound_exponential_moments_in_one_dimension():
    m = CompoundExponential((2.0,), 3.0)
    assert moment(m, 0, "full") == pytest.approx(1.5, rel=1e-12)
    ref, _ = integrate.quad(lambda z: z * 6.0 * math.exp(-2 * z), 0, 1)
    assert moment(m, 0, "small") == pytest.approx(ref, rel=1e-9)


# --- marginal -----------------------------------------------------------------


def test_atom_marginal():
    assert marginal(FiniteAtomic([((1.0, 2.0), 3.0)]), 1) == FiniteAtomic([((2.0,), 3.0)])


def test_stable_marginals():
    m = AnisotropicStable(3, 0, 1.4)
    assert marginal(m, 0) == AnisotropicStable(1, 0, 1.4)
    assert marginal(m, 2) == Zero(1)


def test_marginal_deletes_mass_at_origin():
    m = FiniteAtomic([((1.0, 0.0), 1.0), ((0.5, 2.0), 2.0)])
    assert marginal(m, 1) == FiniteAtomic([((2.0,), 2.0)])


PUSHFORWARD = [
    OrthantPowerLaw(2, 0.3),
    OrthantPowerLaw(3, 0.7, 0.5),
    FiniteAtomic([((1.0, 2.0), 3.0), ((0.0, 0.5), 1.0)]),
    CompoundExponential((1.5, 0.5), 2.0),
    Sum([OrthantPowerLaw(2, 0.6), FiniteAtomic([((0.0, 1.0), 1.0)])]),
]


@pytest.mark.parametrize("m", PUSHFORWARD, ids=lambda m: type(m).__name__)
@pytest.mark.parametrize("xi", [0.1, 1.0, 7.5])
def test_marginal_pushforward_consistency(m, xi):
    for k in range(m.dim):
        e = np.zeros(m.dim)
        e[k] = xi
        assert immigration_integral(marginal(m, k), [xi]) == pytest.approx(immigration_integral(m, e), rel=1e-8)


# --- sampling -----------------------------------------------------------------


def test_zero_measure_has_no_events():
    assert sample_large_jumps(Zero(2), 0.1, 5.0, np.random.default_rng(0)) == []


def test_truncation_level_must_be_positive():
    with pytest.raises(ValueError):
        sample_large_jumps(AnisotropicStable(1, 0, 1.5), 0.0, 1.0, np.random.default_rng(0))


def _count_check(m, eps, T, expected):
    rng = np.random.default_rng(12345)
    counts = np.array([len(sample_large_jumps(m, eps, T, rng)) for _ in range(10_000)])
    # Poisson: the variance equals the mean
    assert abs(counts.mean() - expected) <= 4 * math.sqrt(expected / len(counts))
    return counts


def test_stable_event_count():
    _count_check(AnisotropicStable(1, 0, 1.5), 1.0, 1.0, 1 / 1.5)


def test_atom_event_count_and_locations():
    m = FiniteAtomic([((1.0,), 2.0)])
    _count_check(m, 0.5, 2.0, 4.0)
    events = sample_large_jumps(m, 0.5, 2.0, np.random.default_rng(3))
    assert all(np.array_equal(z, [1.0]) for _, z in events)


def test_power_law_event_count():
    m = OrthantPowerLaw(2, 0.5)
    _count_check(m, 0.5, 1.0, m.tail_mass(0.5))


def test_events_are_sorted_inside_the_horizon_and_above_eps():
    m = Sum([AnisotropicStable(2, 0, 1.3), CompoundExponential((1.0, 1.0), 3.0)])
    events = sample_large_jumps(m, 0.2, 4.0, np.random.default_rng(7))
    times = [t for t, _ in events]
    assert times == sorted(times)
    assert all(0 <= t <= 4.0 for t in times)
    assert all(np.linalg.norm(z) > 0.2 for _, z in events)


def test_stable_jump_sizes_follow_inverse_tail():
    rng = np.random.default_rng(0)
    z = AnisotropicStable(1, 0, 1.5).sample_jumps(0.1, 20_000, rng)[:, 0]
    assert z.min() >= 0.1
    # P(Z > 2 eps) = 2^{-alpha}
    frac = np.mean(z > 0.2)
    assert abs(frac - 2**-1.5) < 4 * math.sqrt(2**-1.5 * (1 - 2**-1.5) / len(z))


def test_sampling_is_deterministic_given_the_stream():
    m = Sum([OrthantPowerLaw(2, 0.4), AnisotropicStable(2, 1, 1.6)])
    a = sample_large_jumps(m, 0.05, 3.0, np.random.default_rng(11))
    b = sample_large_jumps(m, 0.05, 3.0, np.random.default_rng(11))
    assert len(a) == len(b)
    assert all(ta == tb and np.array_equal(za, zb) for (ta, za), (tb, zb) in zip(a, b))


# --- small jumps ----------------------------------------------------------------


def test_stable_small_jump_second_moment():
    mean, second = small_jump_stats(AnisotropicStable(1, 0, 1.5), 0, 0, 1.0)
    assert second == pytest.approx(2.0, rel=1e-14)
    assert mean[0] == math.inf


def test_small_jump_stats_trivial_cases():
    mean, second = small_jump_stats(Zero(2), 0, 1, 0.5)
    assert np.array_equal(mean, [0.0, 0.0]) and second == 0.0
    mean, second = small_jump_stats(FiniteAtomic([((1.0, 1.0), 4.0)]), 0, 0, 0.5)
    assert np.array_equal(mean, [0.0, 0.0]) and second == 0.0


def test_immigration_measures_skip_second_moment():
    mean, second = small_jump_stats(OrthantPowerLaw(2, 0.5), 0, 0, 0.1, second_order=False)
    assert second is None
    assert np.all(np.isfinite(mean)) and np.all(mean > 0)


# --- stable constant --------------------------------------------------------------


@pytest.mark.parametrize("alpha", [1.01, 1.1, 1.5, 1.9, 1.99])
def test_stable_constant_matches_gamma_identity(alpha):
    assert stable_constant(alpha) == pytest.approx(gamma_oracle(alpha), rel=1e-8)


def test_stable_constant_is_cached_bit_identically():
    assert stable_constant(1.37) is stable_constant(1.37)


@pytest.mark.parametrize("alpha", [1.0, 2.0, 0.5])
def test_stable_constant_domain(alpha):
    with pytest.raises(ValueError):
        stable_constant(alpha)


# --- construction and schema ----------------------------------------------------------


@pytest.mark.parametrize(
    "build",
    [
        lambda: AnisotropicStable(1, 0, 2.0),
        lambda: OrthantPowerLaw(2, 1.0),
        lambda: FiniteAtomic([((1.0,), -1.0)]),
        lambda: FiniteAtomic([((-1.0,), 1.0)]),
        lambda: CompoundExponential((0.0,), 1.0),
        lambda: AnisotropicStable(2, 2, 1.5),
    ],
)
def test_invalid_family_parameters(build):
    with pytest.raises(ValueError):
        build()


@pytest.mark.parametrize("m", FAMILIES + PUSHFORWARD + [Zero(2)], ids=lambda m: type(m).__name__)
def test_measure_schema_round_trip(m):
    assert measure_from_dict(measure_to_dict(m), m.dim) == m


def test_unknown_measure_type():
    with pytest.raises(ValueError):
        measure_from_dict({"type": "gaussian"}, 1)
