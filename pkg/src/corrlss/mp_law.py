"""Closed-form Marchenko-Pastur quantities.

Density, bulk edges, Stieltjes transform m(z) solving the quadratic
``z*phi*m^2 + (z - (1-phi))*m + 1 = 0``, its companion
``m_under(z) = phi*m(z) - (1-phi)/z``, the derivative m'(z), and the
(1-t)-scaled variant used by the Gaussian divisible model.

Conventions: the MP law parameterized by ``phi`` here has mean 1 and bulk
support [(1-sqrt(phi))^2, (1+sqrt(phi))^2], with an atom of mass
(1 - 1/phi)_+ at zero. Which dimensional ratio (n/p or p/n) this phi should
be identified with for a given correlation-matrix spectrum is decided
empirically by ``experiments.mp_fit_calibration``; nothing here assumes one.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Optional

import numpy as np


class BranchAmbiguityError(ValueError):
    """z is numerically at a bulk edge; the quadratic's two roots coincide."""


@dataclass
class MpTolerances:
    """Module tolerances; override by mutating ``mp_law.TOL`` or passing a copy."""

    quadratic_residual: float = 1e-10
    edge_discriminant: float = 1e-14
    real_axis_lift: float = 1e-8
    phi_one_exclusion: float = 1e-12


TOL = MpTolerances()


@dataclass(frozen=True)
class AspectRatio:
    """Dimensional ratio phi together with the defining dimensions.

    When both n and p are given the ratio must satisfy phi ~ n/p; the mirrored
    object (phi -> 1/phi, dimensions swapped) is available via ``swapped()``.
    phi = 1 is excluded (the limiting spectrum touches zero there).
    """

    phi: float
    n: Optional[int] = None
    p: Optional[int] = None

    def __post_init__(self):
        if not np.isfinite(self.phi) or self.phi <= 0:
            raise ValueError(f"phi must be a positive real, got {self.phi}")
        if abs(self.phi - 1.0) < TOL.phi_one_exclusion:
            raise ValueError("phi = 1 is excluded")
        if self.n is not None and self.n <= 0:
            raise ValueError("n must be positive")
        if self.p is not None and self.p <= 0:
            raise ValueError("p must be positive")
        if self.n is not None and self.p is not None:
            if abs(self.n / self.p - self.phi) > 1.0 / min(self.n, self.p):
                raise ValueError(
                    f"phi={self.phi} inconsistent with n/p={self.n}/{self.p}"
                )

    @classmethod
    def from_dims(cls, n: int, p: int) -> "AspectRatio":
        return cls(phi=n / p, n=n, p=p)

    def swapped(self) -> "AspectRatio":
        """Mirrored ratio: phi -> 1/phi with the roles of n and p exchanged."""
        return AspectRatio(phi=1.0 / self.phi, n=self.p, p=self.n)


@dataclass(frozen=True)
class StieltjesValue:
    z: complex
    m: complex
    m_under: complex
    m_prime: complex
    residual: float = 0.0  # |z phi m^2 + (z-(1-phi)) m + 1| at construction


def mp_edges(ratio: AspectRatio) -> tuple[float, float]:
    """Bulk edges lambda_- = (1-sqrt(phi))^2 and lambda_+ = (1+sqrt(phi))^2."""
    s = np.sqrt(ratio.phi)
    return (1.0 - s) ** 2, (1.0 + s) ** 2


def mp_density(x, ratio: AspectRatio) -> tuple[np.ndarray, float]:
    """Absolutely continuous MP density at x >= 0 plus the atom mass at zero.

    Returns (density, atom_mass) with density
    sqrt(((lp - x)(x - lm))_+) / (2 pi phi x) and atom (1 - 1/phi)_+.
    """
    xs = np.asarray(x, dtype=float)
    if np.any(xs < 0):
        raise ValueError("mp_density requires x >= 0")
    lm, lp = mp_edges(ratio)
    rad = (lp - xs) * (xs - lm)
    with np.errstate(invalid="ignore", divide="ignore"):
        dens = np.where(rad > 0, np.sqrt(np.maximum(rad, 0.0)) / (2 * np.pi * ratio.phi * np.where(xs > 0, xs, 1.0)), 0.0)
    dens = np.where(xs > 0, dens, 0.0)
    atom = max(0.0, 1.0 - 1.0 / ratio.phi)
    if np.isscalar(x) or np.ndim(x) == 0:
        return float(dens), atom
    return dens, atom


def _quadratic_roots(z, phi):
    """Both roots of z*phi*m^2 + (z - (1-phi))*m + 1 = 0, cancellation-safe."""
    z = np.asarray(z, dtype=complex)
    a = z * phi
    b = z - (1.0 - phi)
    disc = np.sqrt(b * b - 4.0 * a)
    # larger-magnitude root first, Vieta for the other
    qv = -0.5 * (b + np.where(np.real(np.conj(b) * disc) >= 0, disc, -disc))
    r1 = qv / a
    r2 = 1.0 / qv
    return r1, r2, b * b - 4.0 * a


def mp_stieltjes(z, ratio: AspectRatio) -> StieltjesValue:
    """MP Stieltjes transform at a single point z off the support.

    Branch selection: Im m * Im z > 0 off the real axis; for real z outside
    the bulk, continuity from Im z = +real_axis_lift. The derivative comes
    from implicit differentiation: m' = -(phi m^2 + m)/(2 z phi m + z - (1-phi)).
    """
    phi = ratio.phi
    zc = complex(z)
    if zc == 0:
        raise ValueError("z = 0 is excluded")
    r1, r2, disc = _quadratic_roots(zc, phi)
    if abs(disc) < TOL.edge_discriminant * abs(zc) ** 2:
        raise BranchAmbiguityError(
            f"z={zc} is numerically at a bulk edge; perturb z off the edge"
        )
    if zc.imag != 0.0:
        m = r1 if np.imag(r1) * zc.imag > 0 else r2
    else:
        lm, lp = mp_edges(ratio)
        if lm <= zc.real <= lp:
            raise ValueError(f"real z={zc.real} inside the bulk [{lm}, {lp}]")
        zl = zc + 1j * TOL.real_axis_lift
        ml = mp_stieltjes(zl, ratio).m
        m = r1 if abs(r1 - ml) < abs(r2 - ml) else r2
    m = complex(m)
    m_under = phi * m - (1.0 - phi) / zc
    m_prime = -(phi * m * m + m) / (2 * zc * phi * m + zc - (1.0 - phi))
    resid = abs(zc * phi * m * m + (zc - (1.0 - phi)) * m + 1.0)
    return StieltjesValue(z=zc, m=m, m_under=m_under, m_prime=complex(m_prime), residual=resid)


def mp_stieltjes_vec(z, ratio: AspectRatio) -> np.ndarray:
    """Vectorized m(z) for arrays with Im z != 0 (quadrature hot path)."""
    z = np.asarray(z, dtype=complex)
    r1, r2, _ = _quadratic_roots(z, ratio.phi)
    return np.where(np.imag(r1) * np.imag(z) > 0, r1, r2)


def mp_stieltjes_prime_vec(z, ratio: AspectRatio) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    m = mp_stieltjes_vec(z, ratio)
    phi = ratio.phi
    return -(phi * m * m + m) / (2 * z * phi * m + z - (1.0 - phi))


def mp_stieltjes_scaled(zeta, t: float, ratio: AspectRatio) -> complex:
    """The (1-t)-scaled transform m^(t)(zeta) = (1-t)^{-1} m(zeta/(1-t))."""
    if not 0.0 <= t < 1.0:
        raise ValueError("t must lie in [0, 1)")
    return mp_stieltjes(complex(zeta) / (1.0 - t), ratio).m / (1.0 - t)


def mp_moment(k: int, phi: float) -> float:
    """k-th moment of the MP(phi) law via Narayana polynomials."""
    if k == 0:
        return 1.0
    total = 0.0
    for r in range(k):
        total += comb(k, r) * comb(k - 1, r) * phi**r / (r + 1)
    return total


def mp_cdf(x, ratio: AspectRatio, grid: int = 4001) -> np.ndarray:
    """CDF of MP(phi) including the atom at zero, evaluated by bulk quadrature."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    lm, lp = mp_edges(ratio)
    atom = max(0.0, 1.0 - 1.0 / ratio.phi)
    grid_x = np.linspace(lm, lp, grid)
    dens, _ = mp_density(grid_x, ratio)
    cum = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) / 2 * np.diff(grid_x))])
    bulk_mass = min(1.0, 1.0 / ratio.phi)
    if cum[-1] > 0:
        cum *= bulk_mass / cum[-1]
    out = np.where(xs < 0, 0.0, atom) + np.interp(xs, grid_x, cum, left=0.0, right=bulk_mass)
    out = np.where(xs < 0, 0.0, np.minimum(out, 1.0))
    return out if np.ndim(x) else float(out[0])
