import numpy as np
import pytest

from corrlss.contour import build_contour
from corrlss.mp_law import AspectRatio
from corrlss.spectra import (
    DensityReference,
    EigensolverError,
    MatrixKind,
    MpReference,
    PoleError,
    SpectralData,
    correlation_matrix,
    eigenvalues,
    empirical_stieltjes,
    esd_distance,
    eta_regularity_check,
    green_entries,
    lss,
    spectral_data_for,
)
from corrlss.tail_sampler import NormalLaw, rng_for, self_normalize

from _oracles import charpoly_eigenvalues, mp_quantile_spectrum


def _sn(n=120, p=60, seed=0):
    X = NormalLaw().sample((p, n), rng_for(seed, 0))
    return self_normalize(X)


def test_correlation_matrix_traces():
    sn = _sn()
    R = correlation_matrix(sn, MatrixKind.N_BY_N)
    Rt = correlation_matrix(sn, MatrixKind.P_BY_P)
    assert np.trace(R) == pytest.approx(60, abs=1e-8)
    assert np.allclose(np.diag(Rt), 1.0, atol=1e-10)
    assert np.allclose(R, R.T, atol=1e-12)


def test_rank_one_case():
    X = NormalLaw().sample((1, 2), rng_for(1, 1))
    sn = self_normalize(X)
    sd = spectral_data_for(sn, MatrixKind.N_BY_N)
    assert sd.eigenvalues == pytest.approx([1.0, 0.0], abs=1e-12)


def test_eigenvalues_identity_and_rank_one():
    sd = eigenvalues(np.eye(5), n=5, p=5, kind=MatrixKind.N_BY_N)
    assert np.allclose(sd.eigenvalues, 1.0)
    u = np.ones(6) / np.sqrt(6)
    sd2 = eigenvalues(np.outer(u, u), n=6, p=6, kind=MatrixKind.N_BY_N)
    assert sd2.eigenvalues[0] == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(sd2.eigenvalues[1:], 0.0, atol=1e-12)


def test_eigenvalues_vs_charpoly_oracle():
    g = np.random.default_rng(7)
    A = g.standard_normal((6, 6))
    A = A @ A.T / 6
    sd = eigenvalues(A, n=6, p=6, kind=MatrixKind.N_BY_N)
    assert np.allclose(sd.eigenvalues, charpoly_eigenvalues(A), atol=1e-8)


def test_dimension_guardrail():
    with pytest.raises(EigensolverError):
        eigenvalues(np.eye(5000), n=5000, p=5000, kind=MatrixKind.N_BY_N)


def test_lss_identities():
    sn = _sn()
    sd_n = spectral_data_for(sn, MatrixKind.N_BY_N)
    sd_p = spectral_data_for(sn, MatrixKind.P_BY_P)
    assert lss(sd_n, lambda x: x) == pytest.approx(60, abs=1e-8)
    assert lss(sd_p, lambda x: x) == pytest.approx(60, abs=1e-8)
    assert lss(sd_n, lambda x: np.ones_like(x)) == pytest.approx(120)
    sd = SpectralData(eigenvalues=np.array([3.0, 2.0, 1.0]), n=3, p=3, matrix_kind=MatrixKind.N_BY_N)
    assert lss(sd, lambda x: x**2) == pytest.approx(14.0)
    sd0 = spectral_data_for(sn, MatrixKind.N_BY_N)
    with pytest.raises(ValueError):
        lss(sd0, lambda x: np.where(x > 0.5, x, np.nan))


def test_nonzero_spectrum_shared_between_kinds():
    sn = _sn()
    a = spectral_data_for(sn, MatrixKind.N_BY_N).nonzero(1e-6)
    b = spectral_data_for(sn, MatrixKind.P_BY_P).nonzero(1e-6)
    assert a.size == b.size
    assert np.allclose(a, b, atol=1e-6)


def test_empirical_stieltjes():
    sd = SpectralData(eigenvalues=np.array([1.0]), n=1, p=1, matrix_kind=MatrixKind.N_BY_N)
    assert empirical_stieltjes(sd, 1j) == pytest.approx(1 / (1 - 1j))
    sn = _sn()
    sdexp = spectral_data_for(sn, MatrixKind.N_BY_N)
    assert empirical_stieltjes(sdexp, 0.5 + 0.5j).imag > 0
    assert abs(empirical_stieltjes(sdexp, 1e6 + 0j) + 1e-6) < 1e-6
    with pytest.raises(PoleError):
        empirical_stieltjes(sd, 1.0 + 0j)


def test_green_entries_cases():
    z = 1j
    G = green_entries(np.zeros((4, 4)), z, rows=[0, 1], cols=[0, 1])
    assert np.allclose(np.diag(G), -1 / z)
    D = np.diag([1.0, 2.0, 3.0])
    Gd = green_entries(D, 0.5 + 0.2j, rows=[0, 1, 2], cols=[0, 1, 2])
    assert np.allclose(np.diag(Gd), 1 / (np.array([1.0, 2, 3]) - (0.5 + 0.2j)))
    sn = _sn(40, 20, 3)
    R = correlation_matrix(sn, MatrixKind.N_BY_N)
    idx = [0, 3, 7]
    B = green_entries(R, 0.3 + 0.4j, rows=idx, cols=idx)
    assert np.allclose(B, B.T, atol=1e-10)


def test_green_trace_matches_empirical_stieltjes():
    sn = _sn(50, 25, 5)
    R = correlation_matrix(sn, MatrixKind.N_BY_N)
    sd = spectral_data_for(sn, MatrixKind.N_BY_N)
    z = 0.7 + 0.9j
    G = green_entries(R, z, rows=list(range(50)), cols=list(range(50)))
    assert np.mean(np.diag(G)) == pytest.approx(empirical_stieltjes(sd, z), abs=1e-10)


def test_green_near_singular_error():
    D = np.diag([1.0, 2.0, 3.0])
    with pytest.raises(PoleError):
        green_entries(D, 2.0 + 0j, rows=[0], cols=[0])


def test_lss_resolvent_contour_consistency():
    sn = _sn(150, 75, 2)
    sd = spectral_data_for(sn, MatrixKind.N_BY_N)
    ratio = AspectRatio(phi=0.5)  # spectral MP parameter p/n
    c = build_contour(ratio)
    count = sd.count

    def integrand(z):
        return np.array([complex(z_k**2) * count * empirical_stieltjes(sd, z_k) for z_k in z])

    from corrlss.contour import contour_integrate

    val = -contour_integrate(integrand, c) / (2j * np.pi)
    target = float(np.sum(sd.eigenvalues**2))
    assert abs(val.real - target) / target < 1e-4


def test_eta_regularity_mp_quantiles():
    ev = mp_quantile_spectrum(0.5, 500)
    sd = SpectralData(eigenvalues=ev, n=500, p=500, matrix_kind=MatrixKind.N_BY_N)
    rep = eta_regularity_check(sd, eta_star=500.0 ** (-1 / 3))
    assert rep.condition_i_pass and rep.condition_ii_pass and rep.condition_iii_pass
    assert rep.fitted_CV < 20


def test_eta_regularity_two_clusters_fail():
    # inside a wide gap Im m ~ eta/gap^2 while the regular profile demands
    # sqrt(kappa0 + eta) ~ 2; the mismatch exceeds any C_V < 20
    left = np.linspace(0.25, 0.75, 250)
    right = np.linspace(8.0, 8.5, 250)
    ev = np.sort(np.concatenate([left, right]))[::-1]
    sd = SpectralData(eigenvalues=ev, n=500, p=500, matrix_kind=MatrixKind.N_BY_N)
    rep = eta_regularity_check(sd, eta_star=0.02)
    assert not rep.condition_i_pass


def test_eta_regularity_grid_respects_cutoffs():
    ev = mp_quantile_spectrum(0.5, 200)
    sd = SpectralData(eigenvalues=ev, n=200, p=200, matrix_kind=MatrixKind.N_BY_N)
    eta_star = 200.0 ** (-1 / 3)
    rep = eta_regularity_check(sd, eta_star=eta_star)
    lam_lo, lam_hi = ev.min(), ev.max()
    for E, eta, _, kappa0 in rep.grid:
        if lam_lo <= E <= lam_hi:
            assert eta >= eta_star + np.sqrt(eta_star * kappa0) - 1e-12
        else:
            assert eta >= eta_star - 1e-12


def test_eta_regularity_validation_errors():
    ev = mp_quantile_spectrum(0.5, 200)
    sd = SpectralData(eigenvalues=ev, n=200, p=200, matrix_kind=MatrixKind.N_BY_N)
    with pytest.raises(ValueError):
        eta_regularity_check(sd, eta_star=2.0)
    small = SpectralData(eigenvalues=np.linspace(2, 1, 5), n=5, p=5, matrix_kind=MatrixKind.N_BY_N)
    with pytest.raises(ValueError):
        eta_regularity_check(small, eta_star=0.3)


def test_esd_distance_quantile_construction():
    ratio = AspectRatio(phi=0.5)
    ev = mp_quantile_spectrum(0.5, 10_000)
    sd = SpectralData(eigenvalues=ev, n=10_000, p=10_000, matrix_kind=MatrixKind.N_BY_N)
    ks = esd_distance(sd, MpReference(ratio))
    assert ks < 2e-4


def test_esd_distance_bounds_and_shift():
    ratio = AspectRatio(phi=0.5)
    ev = mp_quantile_spectrum(0.5, 500) + 10.0
    sd = SpectralData(eigenvalues=ev, n=500, p=500, matrix_kind=MatrixKind.N_BY_N)
    ks = esd_distance(sd, MpReference(ratio))
    assert 0.99 <= ks <= 1.0


def test_density_reference_with_atom():
    grid = np.linspace(0.01, 3, 300)
    dens = np.where((grid > 0.5) & (grid < 2.5), 0.5, 0.0)
    ref = DensityReference(grid=grid, density=dens, atom=0.5)
    ev = np.sort(np.concatenate([np.zeros(500), np.random.default_rng(0).uniform(0.5, 2.5, 500)]))[::-1]
    sd = SpectralData(eigenvalues=ev, n=1000, p=1000, matrix_kind=MatrixKind.N_BY_N)
    ks = esd_distance(sd, ref)
    assert ks < 0.05
