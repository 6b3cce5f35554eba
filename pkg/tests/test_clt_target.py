import numpy as np
import pytest

from corrlss.clt_target import (
    CoincidenceError,
    TestFunction,
    clt_target_for,
    edge_mean_term,
    kernel_dz2,
    mean_aF,
    mean_refined,
    mp_integral,
    schott_moments,
    variance_sigmaF,
)
from corrlss.contour import build_contour, default_params, disjoint_pair, nested_params
from corrlss.mp_law import AspectRatio, mp_edges

from _oracles import exact_gaussian_trace_means, oracle_mean, oracle_variance

R400 = AspectRatio.from_dims(400, 200)
FX = TestFunction.monomial(1)
FX2 = TestFunction.monomial(2)
FX3 = TestFunction.monomial(3)


def test_mean_linearity():
    a1 = mean_aF(FX2, R400)
    a2 = mean_aF(FX2.scaled(3.7), R400)
    assert a2 == pytest.approx(3.7 * a1, rel=1e-10)


def test_mean_x_near_trace():
    # tr R = p exactly; the contour formula carries a 2p/n offset (0.5% at n=400)
    a = mean_aF(FX, R400)
    assert abs(a - 200.0) / 200.0 <= 0.005 + 1e-12


def test_mean_x2_near_schott():
    a = mean_aF(FX2, R400)
    exact = 200 + 200 * 199 / 400
    assert abs(a - exact) / exact < 0.01


@pytest.mark.parametrize(
    "coeffs", [[0.0, 1.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0, 1.0], [1.0, -2.0, 0.5, 1.5]]
)
def test_mean_matches_residue_oracle(coeffs):
    f = TestFunction.polynomial(coeffs)
    a = mean_aF(f, R400)
    assert a == pytest.approx(oracle_mean(coeffs, 400, 200), rel=1e-9, abs=1e-9)


def test_refined_mean_exact_traces():
    exact = exact_gaussian_trace_means(400, 200)
    assert mean_refined(FX, R400) == pytest.approx(exact[1], abs=1e-8)
    assert mean_refined(FX2, R400) == pytest.approx(exact[2], abs=1e-8)
    # x^3 has an O(1/n) combinatorial remainder
    assert mean_refined(FX3, R400) == pytest.approx(exact[3], abs=0.05)


def test_refined_mean_small_ratio_side():
    # n < p: full-rank NbyN matrix, no zero block; tr R = p still
    r = AspectRatio.from_dims(400, 800)
    assert mean_refined(FX, r) == pytest.approx(800.0, abs=1e-8)


def test_variance_deterministic_direction():
    assert variance_sigmaF(FX, R400) < 1e-6


def test_variance_scaling():
    s1 = variance_sigmaF(FX2, R400)
    s2 = variance_sigmaF(FX2.scaled(2.0), R400)
    assert s2 == pytest.approx(4.0 * s1, rel=1e-10)


def test_variance_x2_universal_value():
    s = variance_sigmaF(FX2, R400)
    universal = 4.0 * 200**2 / 400**2
    assert s == pytest.approx(universal, rel=0.02)


@pytest.mark.parametrize("coeffs", [[0.0, 1.0], [0.0, 0.0, 1.0], [0.0, 1.0, 1.0], [0.0, 0.0, 0.0, 1.0]])
def test_variance_matches_residue_oracle(coeffs):
    f = TestFunction.polynomial(coeffs)
    s = variance_sigmaF(f, R400)
    assert s == pytest.approx(oracle_variance(coeffs, 400, 200), rel=1e-8, abs=1e-8)


@pytest.mark.parametrize("dims", [(400, 200), (400, 800), (400, 100)])
def test_variance_nonnegative_across_shapes(dims):
    r = AspectRatio.from_dims(*dims)
    for f in (FX, FX2, FX3, TestFunction.polynomial([0, 1, 1])):
        assert variance_sigmaF(f, r) >= 0.0


def test_contour_perturbation_invariance():
    base = default_params(R400.swapped())
    for scale in (0.8, 1.2):
        params = type(base)(
            c1=base.c1 * scale, c2=base.c2 * scale, C1=base.C1 * scale, C2=base.C2 * scale,
            regime=base.regime,
        )
        c = build_contour(R400.swapped(), params)
        a = mean_aF(FX2, R400, c)
        assert a == pytest.approx(mean_aF(FX2, R400), rel=1e-6)
        pair = (c, build_contour(R400.swapped(), nested_params(params)))
        s = variance_sigmaF(FX2, R400, pair)
        assert s == pytest.approx(variance_sigmaF(FX2, R400), rel=1e-6)


def test_kernel_dz2_finite_differences():
    r = AspectRatio.from_dims(400, 200)
    _, lp = mp_edges(r.swapped())
    z1, z2 = lp + 1 + 1j, lp + 2 + 2j
    h = 1e-6
    from corrlss.clt_target import _pair

    def K(zz1, zz2):
        m1, mu1, _, q = _pair(np.array([zz1]), r)
        m2, mu2, _, _ = _pair(np.array([zz2]), r)
        return complex(
            (zz1 * m1[0] - zz2 * m2[0]) / (zz1 - zz2) + q * zz1 * m1[0] * mu1[0] * zz2 * mu2[0]
        )

    fd = (K(z1, z2 + h) - K(z1, z2 - h)) / (2 * h)
    val = complex(kernel_dz2(z1, z2, r))
    assert abs(val - fd) < 1e-5 * abs(fd)


def test_kernel_conjugation_symmetry():
    r = R400
    z1, z2 = 4.0 + 1.5j, 5.0 + 2.5j
    k = complex(kernel_dz2(z1, z2, r))
    kc = complex(kernel_dz2(np.conj(z1), np.conj(z2), r))
    assert kc == pytest.approx(np.conj(k), rel=1e-12)


def test_kernel_decay_large_z2():
    r = R400
    vals = [abs(complex(kernel_dz2(4.0 + 1j, t * (1 + 1j), r))) for t in (1e2, 1e3, 1e4)]
    assert vals[2] < vals[1] < vals[0]
    assert vals[2] < 1e-6


def test_kernel_coincidence_error():
    with pytest.raises(CoincidenceError):
        kernel_dz2(2.0 + 1j, 2.0 + 1j + 1e-9, R400)


def test_schott_moment_examples():
    n, p = 400, 200
    mean, _ = schott_moments(n, p, beta2=1.0 / n, beta4=0.0, beta11=0.0)
    assert mean == pytest.approx(p + p * (p - 1) / n)
    _, var = schott_moments(n, p, beta2=1.0 / n, beta4=3.0 / n**2, beta11=0.0)
    assert var == pytest.approx(18 * p**2 / n**3 + 4 * p**2 / n**2)
    beta4 = 3 * np.pi / 4 * n ** -1.5
    _, var3 = schott_moments(n, p, 1.0 / n, beta4, 0.0)
    assert var3 - 4 * p**2 / n**2 == pytest.approx(9 * np.pi**2 / 8 * p**2 / n**2, rel=1e-12)


def test_edge_mean_term_closed_forms():
    # mu(x) = 0, mu(x^2) = q, mu(x^3) = 3q(1+q) for every q
    for q in (0.25, 0.5, 2.0):
        assert edge_mean_term(FX, q) == pytest.approx(0.0, abs=1e-10)
        assert edge_mean_term(FX2, q) == pytest.approx(q, abs=1e-10)
        assert edge_mean_term(FX3, q) == pytest.approx(3 * q * (1 + q), abs=1e-9)


def test_mp_integral_moments():
    for q in (0.5, 2.0):
        assert mp_integral(FX, q) == pytest.approx(1.0, abs=1e-10)
        assert mp_integral(FX2, q) == pytest.approx(1.0 + q, abs=1e-9)


def test_clt_target_record():
    t = clt_target_for(FX2, R400)
    assert t.a_f == pytest.approx(200 + 200 * 199 / 400, abs=1e-8)
    assert t.sigma2_f == pytest.approx(1.0, rel=1e-6)
    assert not t.variance_clamped
    assert abs(t.diagnostics["a_f_offset"] - 2.0) < 1e-6
    payload = t.to_json()
    assert "sigma2_f" in payload


def test_analytic_test_function():
    f = TestFunction.analytic(lambda z: np.exp(z / 10.0), label="exp(x/10)")
    a = mean_aF(f, R400)
    s = variance_sigmaF(f, R400)
    assert np.isfinite(a) and s >= 0
    # refined mean = p * bulk integral + zero block (n-p) f(0) - edge term
    ref = mean_refined(f, R400)
    expected = 200 * mp_integral(f, 0.5) + 200 * 1.0 - edge_mean_term(f, 0.5)
    assert ref == pytest.approx(expected, abs=1e-9)
