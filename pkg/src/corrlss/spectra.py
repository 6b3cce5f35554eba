"""Correlation-matrix spectra: eigenvalues, LSS, resolvents, distribution fits.

Both Gram shapes of the self-normalized data are supported: the n x n matrix
R = YY* and the p x p matrix R~ = Y*Y. They share nonzero eigenvalues; the
larger shape carries |n - p| exact zeros.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .mp_law import AspectRatio, mp_cdf
from .tail_sampler import SelfNormalized

MAX_DENSE_DIM = 4096
EIG_CLAMP = 1e-8


class MatrixKind(enum.Enum):
    N_BY_N = "NbyN"
    P_BY_P = "PbyP"


class EigensolverError(RuntimeError):
    pass


class PoleError(ValueError):
    pass


@dataclass(frozen=True)
class SpectralData:
    eigenvalues: np.ndarray  # descending
    n: int
    p: int
    matrix_kind: MatrixKind

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        expected = self.n if self.matrix_kind is MatrixKind.N_BY_N else self.p
        if ev.size != expected:
            raise ValueError(f"expected {expected} eigenvalues, got {ev.size}")
        if np.any(ev < -EIG_CLAMP):
            raise ValueError("eigenvalue below the PSD clamp tolerance")
        if np.any(np.diff(ev) > 1e-12):
            raise ValueError("eigenvalues must be sorted in descending order")

    @property
    def count(self) -> int:
        return self.eigenvalues.size

    def nonzero(self, tol: float = 1e-10) -> np.ndarray:
        return self.eigenvalues[self.eigenvalues > tol]

    def to_csv(self) -> str:
        return "\n".join(repr(float(x)) for x in self.eigenvalues) + "\n"


@dataclass(frozen=True)
class RegularityReport:
    eta_star: float
    fitted_CV: float
    condition_i_pass: bool
    condition_ii_pass: bool
    condition_iii_pass: bool
    grid: list = field(default_factory=list)  # (E, eta, Im m_V, kappa0) rows


def correlation_matrix(sn: SelfNormalized, kind: MatrixKind) -> np.ndarray:
    """R = YY* (n x n) or R~ = Y*Y (p x p); the latter has unit diagonal."""
    Y = sn.Y
    if kind is MatrixKind.N_BY_N:
        R = Y @ Y.T
    else:
        R = Y.T @ Y
    return (R + R.T) / 2


def eigenvalues(Rmat: np.ndarray, n: int, p: int, kind: MatrixKind) -> SpectralData:
    """Dense symmetric eigendecomposition, descending, clamped at zero."""
    Rmat = np.asarray(Rmat, dtype=float)
    if Rmat.shape[0] != Rmat.shape[1]:
        raise ValueError("matrix must be square")
    if Rmat.shape[0] > MAX_DENSE_DIM:
        raise EigensolverError(f"dimension {Rmat.shape[0]} exceeds the desk-scale cap {MAX_DENSE_DIM}")
    if not np.allclose(Rmat, Rmat.T, atol=1e-10):
        raise ValueError("matrix must be symmetric")
    try:
        ev = np.linalg.eigvalsh(Rmat)
    except np.linalg.LinAlgError as exc:
        diag = float(np.abs(np.diag(Rmat)).max(initial=0.0))
        raise EigensolverError(f"eigensolver failed (max |diag| = {diag:.3e})") from exc
    ev = np.where(np.abs(ev) < EIG_CLAMP, 0.0, ev)  # numerical zeros become the exact atom
    return SpectralData(eigenvalues=ev[::-1].copy(), n=n, p=p, matrix_kind=kind)


def spectral_data_for(sn: SelfNormalized, kind: MatrixKind) -> SpectralData:
    p, n = sn.X_dims
    return eigenvalues(correlation_matrix(sn, kind), n, p, kind)


def lss(sd: SpectralData, f: Callable[[np.ndarray], np.ndarray]) -> float:
    """Linear spectral statistic sum_i f(lambda_i) over the kind's eigenvalues."""
    vals = np.asarray(f(sd.eigenvalues), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("f is not finite at some eigenvalue")
    return float(np.sum(vals))


def empirical_stieltjes(sd: SpectralData, z: complex) -> complex:
    """(1/count) sum 1/(lambda_i - z)."""
    z = complex(z)
    diffs = sd.eigenvalues - z
    if np.any(np.abs(diffs) < 1e-14):
        raise PoleError("z collides with an eigenvalue")
    return complex(np.mean(1.0 / diffs))


def green_entries(
    Rmat: np.ndarray, z: complex, rows: Sequence[int], cols: Sequence[int]
) -> np.ndarray:
    """Selected entries of (R - zI)^{-1} via one factorization, no full inverse."""
    Rmat = np.asarray(Rmat, dtype=float)
    dim = Rmat.shape[0]
    A = Rmat.astype(complex) - complex(z) * np.eye(dim)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(A)
    except scipy.linalg.LinAlgError as exc:
        raise PoleError(f"(R - zI) is singular at z={z}") from exc
    rhs = np.zeros((dim, len(cols)), dtype=complex)
    for k, c in enumerate(cols):
        rhs[c, k] = 1.0
    sol = scipy.linalg.lu_solve((lu, piv), rhs)
    cond_proxy = np.abs(sol).max()
    if not np.all(np.isfinite(sol)) or cond_proxy > 1e14:
        ev = np.linalg.eigvalsh(Rmat)
        nearest = float(np.min(np.abs(ev - z)))
        raise PoleError(f"near-singular solve: |z - nearest eigenvalue| = {nearest:.3e}")
    return sol[np.asarray(rows, dtype=int), :]


# ---------------------------------------------------------------------------
# eta*-regularity
# ---------------------------------------------------------------------------

def _im_m(ev: np.ndarray, E: float, eta: float) -> float:
    return float(np.mean(eta / ((ev - E) ** 2 + eta * eta)))


def eta_regularity_check(
    sd: SpectralData,
    eta_star: float,
    cv_cap: float = 20.0,
    n_E: int = 24,
    n_eta: int = 12,
) -> RegularityReport:
    """Check square-root regularity of the nonzero spectrum down to scale eta*.

    (i) fits the smallest C_V making the two-sided Im m_V bounds hold on a
    grid (inside the spectrum Im m ~ sqrt(kappa0 + eta) for
    eta >= eta* + sqrt(eta* kappa0); outside ~ eta/sqrt(kappa0 + eta) for
    eta >= eta*); passes when the fit stays below cv_cap. (ii) requires the
    nonzero extremes within [1/cv_cap, cv_cap]. (iii) requires the norm at
    most count^cv_cap.
    """
    count = sd.count
    if not (count ** (-2.0 / 3.0) < eta_star < 1.0):
        raise ValueError("eta_star must lie in (count^(-2/3), 1)")
    ev = sd.nonzero()
    if ev.size < 10:
        raise ValueError("need at least 10 nonzero eigenvalues")
    lam_lo, lam_hi = float(ev.min()), float(ev.max())
    # top of the eta grid: the nominal 10 is meaningless for an O(1) spectrum
    # (Im m ~ 1/eta there for every measure); cap at the spectral span scale
    eta_max = min(10.0, lam_hi - lam_lo + 0.5)
    grid_rows = []
    worst = 1.0
    # inside branch
    for E in np.linspace(lam_lo, lam_hi, n_E):
        kappa0 = min(abs(E - lam_lo), abs(E - lam_hi))
        eta_min = eta_star + np.sqrt(eta_star * kappa0)
        for eta in np.geomspace(eta_min, eta_max, n_eta):
            im = _im_m(ev, float(E), float(eta))
            target = np.sqrt(kappa0 + eta)
            worst = max(worst, im / target, target / im)
            grid_rows.append((float(E), float(eta), im, float(kappa0)))
    # outside branch
    span = lam_hi - lam_lo
    for E in np.concatenate([
        np.linspace(lam_lo - 0.5 * span - 0.1, lam_lo, n_E // 3),
        np.linspace(lam_hi, lam_hi + 0.5 * span + 0.1, n_E // 3),
    ]):
        kappa0 = min(abs(E - lam_lo), abs(E - lam_hi))
        for eta in np.geomspace(eta_star, eta_max, n_eta):
            im = _im_m(ev, float(E), float(eta))
            target = eta / np.sqrt(kappa0 + eta)
            worst = max(worst, im / target, target / im)
            grid_rows.append((float(E), float(eta), im, float(kappa0)))
    cond_i = worst <= cv_cap
    cond_ii = (1.0 / cv_cap) <= lam_lo and lam_hi <= cv_cap
    cond_iii = lam_hi <= float(count) ** cv_cap
    return RegularityReport(
        eta_star=eta_star,
        fitted_CV=float(worst),
        condition_i_pass=bool(cond_i),
        condition_ii_pass=bool(cond_ii),
        condition_iii_pass=bool(cond_iii),
        grid=grid_rows,
    )


# ---------------------------------------------------------------------------
# distribution distances
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MpReference:
    """KS reference: the MP law of ``ratio`` including its zero atom."""

    ratio: AspectRatio

    @property
    def atom_at_zero(self) -> float:
        return max(0.0, 1.0 - 1.0 / self.ratio.phi)

    def cdf(self, x: np.ndarray) -> np.ndarray:
        return mp_cdf(x, self.ratio)

    def quantile_grid(self, k: int = 1000) -> np.ndarray:
        from .mp_law import mp_edges

        lm, lp = mp_edges(self.ratio)
        return np.linspace(max(lm - 0.1, 0.0), lp + 0.1, k)


@dataclass(frozen=True)
class DensityReference:
    """KS reference from a tabulated density plus an optional atom at zero."""

    grid: np.ndarray
    density: np.ndarray
    atom: float = 0.0

    @property
    def atom_at_zero(self) -> float:
        return self.atom

    def cdf(self, x: np.ndarray) -> np.ndarray:
        g = np.asarray(self.grid, dtype=float)
        d = np.asarray(self.density, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum((d[1:] + d[:-1]) / 2 * np.diff(g))])
        total = self.atom + cum[-1]
        if total > 0:
            scale = (1.0 - self.atom) / cum[-1] if cum[-1] > 0 else 0.0
            cum = cum * scale
        out = self.atom + np.interp(np.asarray(x, dtype=float), g, cum, left=0.0, right=1.0 - self.atom)
        return np.where(np.asarray(x) < 0, 0.0, np.minimum(out, 1.0))

    def quantile_grid(self, k: int = 1000) -> np.ndarray:
        return np.linspace(float(self.grid[0]), float(self.grid[-1]), k)


def esd_distance(sd: SpectralData, reference) -> float:
    """Kolmogorov-Smirnov distance between the ESD and a reference CDF.

    The sup runs over the eigenvalue points (both CDF sides) and a reference
    quantile grid; left limits on the empirical side are matched against left
    limits of the reference so shared atoms at zero compare correctly.
    """
    ev = np.sort(sd.eigenvalues)
    count = ev.size
    xs = np.concatenate([ev, reference.quantile_grid()])
    xs = np.unique(xs)
    ref = reference.cdf(xs)
    atom = getattr(reference, "atom_at_zero", 0.0)
    ref_left = ref - np.where(xs == 0.0, atom, 0.0)
    emp = np.searchsorted(ev, xs, side="right") / count
    emp_left = np.searchsorted(ev, xs, side="left") / count
    ks = float(np.max(np.maximum(np.abs(emp - ref), np.abs(emp_left - ref_left))))
    return min(ks, 1.0)
