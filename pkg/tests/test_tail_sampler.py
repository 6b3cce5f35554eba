import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corrlss.tail_sampler import (
    Const,
    CriticalKind,
    InsufficientMomentsError,
    LogPower,
    NormalLaw,
    TailLaw,
    asymptotic_even_moment,
    critical_condition,
    cumulant_expansion_residual,
    cumulants_from_moments,
    gaussian_moments,
    odd_moment_estimate,
    rng_for,
    sample_matrix,
    self_normalize,
    two_point_moments,
)

LAWS = [
    TailLaw.build(3.5),
    TailLaw.build(3.0),
    TailLaw.build(2.5),
    TailLaw.build(3.0, LogPower(-1.0)),
    TailLaw.build(3.5, symmetric=False),
]


@pytest.mark.parametrize("law", LAWS)
def test_exact_standardization(law):
    assert law.mean() == pytest.approx(0.0, abs=1e-8)
    assert law.variance() == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("law", LAWS)
def test_tail_exact_on_cdf(law):
    xs = law.x0 * np.array([1.0, 1.7, 3.0, 10.0])
    probs = law.tail_prob(xs)
    l_vals = law.slowly_varying(xs)
    assert np.allclose(probs * xs**law.alpha / l_vals, 1.0, atol=1e-12)


@given(st.floats(min_value=2.3, max_value=4.0), st.booleans())
@settings(max_examples=40, deadline=None)
def test_standardization_across_alpha(alpha, symmetric):
    law = TailLaw.build(alpha, symmetric=symmetric)
    assert law.mean() == pytest.approx(0.0, abs=1e-8)
    assert law.variance() == pytest.approx(1.0, abs=1e-8)
    assert -law.x0 < law.core_lo < law.core_hi < law.x0


def test_alpha_near_two_infeasible():
    # with l = 1 and unit variance the tail budget forces x0 ~ (1/(a-2))^{1/(a-2)};
    # close to alpha = 2 that exceeds any sane threshold and is rejected
    with pytest.raises(ValueError):
        TailLaw.build(2.05)


def test_slowly_varying_limit():
    # l(tx)/l(x) -> 1: exact for constants, logarithmically for log powers
    for t in (0.5, 2.0, 10.0):
        assert float(Const(2.0)(t * 1e6)) / float(Const(2.0)(1e6)) == 1.0
    for sv in (LogPower(-1.0), LogPower(1.5)):
        for t in (0.5, 2.0, 10.0):
            devs = [abs(float(sv(t * x)) / float(sv(x)) - 1.0) for x in (1e6, 1e12, 1e24, 1e48)]
            assert all(a > b for a, b in zip(devs, devs[1:]))
            assert devs[-1] < 0.05


def test_x0_raised_when_infeasible():
    assert TailLaw.build(3.5).x0 == pytest.approx(3.0)
    assert TailLaw.build(2.5).x0 > 25.0


def test_sample_matrix_statistics():
    law = TailLaw.build(3.5)
    n, p = 800, 500  # np = 4e5
    X = sample_matrix(law, n, p, seed=7)
    assert X.shape == (p, n)
    assert abs(X.mean()) < 4 / np.sqrt(n * p)
    T = 3 * law.x0
    expected = n * p * float(law.tail_prob(T))
    count = int(np.sum(np.abs(X) > T))
    assert abs(count - expected) < 4 * np.sqrt(expected)
    signs = int(np.sum(X > 0))
    assert abs(signs - n * p / 2) < 4 * np.sqrt(n * p) / 2


def test_sampling_deterministic():
    law = TailLaw.build(3.0)
    assert np.array_equal(sample_matrix(law, 50, 20, seed=5), sample_matrix(law, 50, 20, seed=5))
    assert not np.array_equal(sample_matrix(law, 50, 20, seed=5), sample_matrix(law, 50, 20, seed=6))


def test_logpower_tail_inversion():
    law = TailLaw.build(3.0, LogPower(-1.0))
    g = rng_for(11, 3)
    X = law.sample(400_000, g)
    T = 2 * law.x0
    expected = X.size * float(law.tail_prob(T))
    count = int(np.sum(np.abs(X) > T))
    assert abs(count - expected) < 5 * np.sqrt(expected)


def test_self_normalize_invariants():
    law = TailLaw.build(3.5)
    X = sample_matrix(law, 300, 120, seed=3)
    sn = self_normalize(X)
    norms = np.einsum("ij,ij->j", sn.Y, sn.Y)
    assert np.allclose(norms, 1.0, atol=1e-10)
    assert np.sum(sn.Y**2) == pytest.approx(120, abs=1e-8)
    assert np.max(np.abs(sn.Y)) <= 1.0


def test_self_normalize_gaussian_rho_concentration():
    X = NormalLaw().sample((40, 10_000), rng_for(1, 4))
    sn = self_normalize(X)
    assert np.max(np.abs(sn.rho / np.sqrt(10_000) - 1.0)) < 0.1


def test_self_normalize_degenerate_column():
    X = np.zeros((3, 5))
    X[1, :] = 1.0
    with pytest.raises(Exception):
        self_normalize(X)


def test_asymptotic_even_moment_values():
    val = asymptotic_even_moment(3.0, 2, 10_000)
    assert val == pytest.approx(3 * np.pi / 4 * 10_000**-1.5, rel=1e-12)
    assert asymptotic_even_moment(3.0, 1, 123) == pytest.approx(1 / 123)
    with pytest.raises(ValueError):
        asymptotic_even_moment(4.0, 2, 100)


def test_even_moment_monte_carlo_agreement():
    # reduced-size version of the moment-rate check (full scale in acceptance)
    law = TailLaw.build(3.5)
    n, cols = 2000, 4000
    g = rng_for(9, 5)
    X = law.sample((cols, n), g)
    r2 = np.einsum("ij,ij->i", X, X)
    b4 = float(np.mean(np.einsum("ij,ij->i", X**2, X**2) / r2**2) / n)
    pred = asymptotic_even_moment(law.alpha, 2, n, law)
    assert abs(b4 - pred) / pred < 0.5


def test_beta4_decreases_in_alpha():
    n = 1000
    vals = []
    for alpha in (2.5, 3.0, 3.5, 4.0):
        law = TailLaw.build(alpha)
        g = rng_for(2, 6)
        X = law.sample((2000, n), g)
        r2 = np.einsum("ij,ij->i", X, X)
        vals.append(float(np.mean(np.einsum("ij,ij->i", X**2, X**2) / r2**2) / n))
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_critical_condition_classification():
    assert critical_condition(TailLaw.build(3.5)).kind is CriticalKind.ZERO
    res = critical_condition(TailLaw.build(3.0, Const(1.0)))
    assert res.kind is CriticalKind.POSITIVE_FINITE and res.value == 1.0
    assert critical_condition(TailLaw.build(3.0, LogPower(-1.0))).kind is CriticalKind.ZERO
    assert critical_condition(TailLaw.build(3.0, LogPower(0.5))).kind is CriticalKind.INFINITE
    assert critical_condition(TailLaw.build(2.5)).kind is CriticalKind.INFINITE


def test_cumulants_gaussian():
    kappa = cumulants_from_moments(gaussian_moments(6))
    assert np.allclose(kappa, [0, 1, 0, 0, 0, 0], atol=1e-12)


def test_cumulants_poisson():
    # Poisson(2) raw moments m1..m4, Touchard-polynomial values
    kappa = cumulants_from_moments([2.0, 6.0, 22.0, 94.0])
    assert np.allclose(kappa, [2.0, 2.0, 2.0, 2.0], atol=1e-12)


@given(st.floats(min_value=-3, max_value=3))
@settings(max_examples=30, deadline=None)
def test_cumulant_shift_property(c):
    base = gaussian_moments(4)
    # moments of xi + c from the binomial expansion
    m = [0.0] * 4
    full = [1.0] + base
    for r in range(1, 5):
        m[r - 1] = sum(math.comb(r, j) * full[j] * c ** (r - j) for j in range(r + 1))
    k0 = cumulants_from_moments(base)
    k1 = cumulants_from_moments(m)
    assert k1[0] == pytest.approx(k0[0] + c, abs=1e-9)
    assert np.allclose(k1[1:], k0[1:], atol=1e-8)


def test_cumulant_expansion_gaussian_stein():
    # E(xi * xi^3) = 3 = kappa_2 * E(3 xi^2); residual identically zero
    assert cumulant_expansion_residual(NormalLaw(), [0, 0, 0, 1], ell=1) < 1e-12
    for coeffs in ([0, 1, 0, 2, 0, 1], [1, 2, 3, 4, 5, 6]):
        assert cumulant_expansion_residual(NormalLaw(), coeffs, ell=6) < 1e-12


def test_cumulant_expansion_two_point():
    assert cumulant_expansion_residual(two_point_moments(10), [0, 0, 1], ell=3) < 1e-12


def test_cumulant_expansion_insufficient_moments():
    with pytest.raises(InsufficientMomentsError):
        cumulant_expansion_residual(TailLaw.build(3.5), [0, 0, 0, 1], ell=2)
    with pytest.raises(InsufficientMomentsError):
        cumulant_expansion_residual([0.0, 1.0], [0, 0, 1], ell=3)


def test_odd_moment_symmetric_band():
    law = TailLaw.build(3.5)
    est, se = odd_moment_estimate(law, n=200, mc_samples=20_000, seed=3)
    assert abs(est) <= 4 * se


def test_odd_moment_asymmetric_rate():
    law = TailLaw.build(3.5, symmetric=False)
    est, se = odd_moment_estimate(law, n=200, mc_samples=40_000, seed=4)
    assert abs(est) <= max(10 * se, 10 * 200.0**-2)


def test_odd_moment_stderr_sqrt_law():
    law = TailLaw.build(3.5)
    _, se1 = odd_moment_estimate(law, n=100, mc_samples=10_000, seed=5)
    _, se2 = odd_moment_estimate(law, n=100, mc_samples=40_000, seed=5)
    assert se2 / se1 == pytest.approx(0.5, rel=0.2)
