import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from levybarrier import (
    DomainError,
    JumpSide,
    MixedExponentialDensity,
    ModelSpec,
    SolverError,
    adjustment_coefficient,
    esscher_tilted_model,
    laplace_exponent,
    model_from_dict,
    root_rho,
    ruin_expansion,
    ruin_probability_tilted,
    scale_function,
    scale_h,
    solve_expansion,
)

# frozen from the bisection / sign-scan / linear-system oracles in oracles.py
M1_RHO = 0.09772373998204376
M1_ROOT = 1.462114146630754
M1_COEFF = 0.30299966637014397
TWO_TERM_ROOTS = (0.7664351733191923, 2.8194150014485517)
TWO_TERM_COEFFS = (0.26785166716297243, 0.045966930823005826)


def test_rho_m1(m1):
    rho = root_rho(m1)
    assert rho == pytest.approx(M1_RHO, rel=1e-13)
    assert rho == pytest.approx(oracles.rho_bisect(oracles.m1()), rel=1e-13)
    assert abs(laplace_exponent(m1, rho) - 0.1) <= 1e-12


def test_rho_two_sided_stays_below_theta(two_sided):
    rho = root_rho(two_sided)
    assert 0 < rho < two_sided.theta_max
    assert rho == pytest.approx(oracles.rho_bisect(oracles.two_sided()), rel=1e-12)


def test_rho_needs_lundberg(m1):
    with pytest.raises(SolverError, match="drift condition"):
        root_rho(ModelSpec(0.4, 0.0, 0.1, m1.negative_jumps))


def test_m1_expansion(m1):
    e = solve_expansion(m1)
    assert len(e.roots) == 1
    assert e.roots[0] == pytest.approx(M1_ROOT, rel=1e-13)
    assert e.coeffs[0] == pytest.approx(M1_COEFF, rel=1e-12)
    assert 0 < e.roots[0] < e.tilted_rates[0]


def test_m1_expansion_is_classical_ruin_of_tilted_model(m1):
    # exponential claims: the tilted process is again Cramer-Lundberg
    e = solve_expansion(m1)
    t = esscher_tilted_model(m1)
    R, A = oracles.classical_ruin(t.drift, t.negative_jumps.intensity, t.negative_jumps.density.rates[0])
    assert e.roots[0] == pytest.approx(R, rel=1e-12)
    assert e.coeffs[0] == pytest.approx(A, rel=1e-12)


def test_two_term_expansion(two_term):
    e = solve_expansion(two_term)
    np.testing.assert_allclose(e.roots, TWO_TERM_ROOTS, rtol=1e-13)
    np.testing.assert_allclose(e.coeffs, TWO_TERM_COEFFS, rtol=1e-12)
    r1, r2 = e.tilted_rates
    assert 0 < e.roots[0] < r1 < e.roots[1] < r2
    assert e.sum_coeffs < 1


def test_two_sided_expansion_matches_oracles(two_sided):
    doc = oracles.two_sided()
    e = solve_expansion(two_sided)
    R = oracles.negative_roots_scan(doc, e.rho)
    np.testing.assert_allclose(e.roots, R, rtol=1e-12)
    np.testing.assert_allclose(e.coeffs, oracles.coeffs_linear_system(doc, e.rho, R), rtol=1e-10)
    assert e.sum_coeffs == pytest.approx(1.0, abs=1e-13)


def test_expansion_to_dict(m1):
    d = solve_expansion(m1).to_dict()
    assert list(d) == ["rho", "roots", "coeffs", "sum_coeffs", "tilted_rates"]


def test_expansion_needs_downward_jumps():
    m = ModelSpec(1.0, 0.5, 0.1)
    with pytest.raises(DomainError, match="downward jumps"):
        solve_expansion(m)


def test_classical_ruin_probability(m1):
    e = ruin_expansion(m1)
    R, A = oracles.classical_ruin(1.5, 1.0, 2.0)
    assert (R, A) == (pytest.approx(4 / 3, rel=1e-14), pytest.approx(1 / 3, rel=1e-14))
    assert e.roots[0] == pytest.approx(R, rel=1e-13)
    assert e.coeffs[0] == pytest.approx(A, rel=1e-13)
    assert adjustment_coefficient(m1) == pytest.approx(R, rel=1e-13)


def test_brownian_adjustment_coefficient():
    m = ModelSpec(1.0, 1.0, 0.1)
    assert adjustment_coefficient(m) == pytest.approx(2.0, rel=1e-13)
    assert ruin_expansion(m).coeffs[0] == pytest.approx(1.0, rel=1e-14)


def test_no_ruin_without_downside():
    m = ModelSpec(1.0, 0.0, 0.1, positive_jumps=JumpSide(1.0, MixedExponentialDensity.exponential(2.0)))
    assert math.isinf(adjustment_coefficient(m))


def test_tilted_ruin_probability_m1(m1):
    e = solve_expansion(m1)
    v0, v1 = ruin_probability_tilted(e, 0.0), ruin_probability_tilted(e, 1.0)
    assert 0 < v1 < v0 < 1
    with pytest.raises(DomainError):
        ruin_probability_tilted(e, -0.1)


def test_scale_function_definition(m1_sf):
    # two code paths: the exponential sum and (1 - psi)e^{rho x}
    x = 5.0
    direct = (1 - ruin_probability_tilted(m1_sf.expansion, x)) * math.exp(x * m1_sf.rho)
    assert scale_h(m1_sf, x) == pytest.approx(direct, rel=1e-15, abs=1e-15)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_scale_derivatives_finite_difference(two_sided, order):
    sf = scale_function(two_sided)
    x = np.linspace(0.1, 8.0, 25)
    h = 1e-5
    fd = (scale_h(sf, x + h, order - 1) - scale_h(sf, x - h, order - 1)) / (2 * h)
    np.testing.assert_allclose(scale_h(sf, x, order), fd, rtol=1e-7)


def test_scale_boundary_values(m1_sf, two_sided):
    assert m1_sf.h0() == pytest.approx(1 - M1_COEFF, rel=1e-14)
    assert m1_sf.hprime0() == pytest.approx(scale_h(m1_sf, 0.0, 1), rel=1e-14)
    assert scale_function(two_sided).h0() == pytest.approx(0.0, abs=1e-13)
    with pytest.raises(DomainError):
        scale_h(m1_sf, -1.0)


def test_scale_positive_increasing(two_term_sf):
    x = np.linspace(0, 30, 301)
    assert np.all(scale_h(two_term_sf, x) > 0)
    assert np.all(scale_h(two_term_sf, x, 1) > 0)


def test_lundberg_roots_fast():
    rng = np.random.default_rng(7)
    models = [model_from_dict(oracles.random_model(rng)) for _ in range(100)]
    t0 = time.perf_counter()
    rhos = [root_rho(m) for m in models]
    assert time.perf_counter() - t0 < 1.0
    for m, r in zip(models, rhos):
        assert abs(laplace_exponent(m, r) - m.discount) <= 1e-12 * max(1, m.discount)


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), sigma=st.sampled_from(["zero", "positive"]))
def test_interlacing_property(seed, sigma):
    doc = oracles.random_model(np.random.default_rng(seed), sigma=sigma)
    m = model_from_dict(doc)
    e = solve_expansion(m)
    n = len(doc["neg_jumps"]["rates"])
    creeps = doc["sigma"] > 0 or doc["drift"] < 0
    assert len(e.roots) == n + (1 if creeps else 0)
    bounds = np.sort(np.concatenate([e.R, e.tilted_rates]))
    assert np.all(np.diff(bounds) > 0)
    assert np.array_equal(bounds[::2], e.R)  # R_1 < r_1 < R_2 < ...
    assert np.all(e.A > 0)
    if creeps:
        assert e.sum_coeffs == pytest.approx(1.0, abs=1e-11)
    else:
        assert e.sum_coeffs < 1


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_coefficients_match_linear_system(seed):
    doc = oracles.random_model(np.random.default_rng(seed))
    e = solve_expansion(model_from_dict(doc))
    ref = oracles.coeffs_linear_system(doc, e.rho, e.R)
    np.testing.assert_allclose(e.A, ref, rtol=1e-8, atol=1e-13)
