"""Rectangular free convolution for the Gaussian divisible model.

For Y_t = sqrt(t) W + B with B the self-normalized heavy part (n x p, W
Gaussian with N(0, 1/n) entries), the limiting spectrum of the Gram matrices
of Y_t is the rectangular free convolution of B's spectrum with MP noise.
The solver works on the variables-side (p x p) transform m_t, the unique
Nevanlinna solution of

    m_t(z) = (1/p) sum_j (1 + q t m_t(z)) / (d_j - zeta_t(z)),
    zeta_t(z) = (1 + q t m_t)^2 z - t (1 - q) (1 + q t m_t),   q = p/n,

where {d_j} are the p eigenvalues of B*B. (This is the information-plus-noise
self-consistent equation; the dimension-side transform follows from the exact
rank relation m_nn = q m_pp - (1-q)/z.) The subordination inverse is

    Phi_t(zeta) = zeta (1 - q t m_0(zeta))^2 + (1 - q) t (1 - q t m_0(zeta)),

with m_0(zeta) = (1/p) sum_j (d_j - zeta)^{-1}, satisfying
Phi_t(zeta_t(z)) = z; the rightmost critical point of Phi_t gives the
spectral edge lambda_{+,t} = Phi_t(zeta_+).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from ._gdm_kernels import BACKEND, fp_batch
from .mp_law import AspectRatio

SOLVE_TOL = 1e-12
MAX_ITER = 10_000
EDGE_SCAN_POINTS = 600


class FixedPointDivergence(RuntimeError):
    """The damped iteration did not converge; carries the last residual."""

    def __init__(self, residual: float, iterations: int):
        super().__init__(f"no convergence after {iterations} iterations; residual {residual:.3e}")
        self.residual = residual
        self.iterations = iterations


class NevanlinnaViolation(RuntimeError):
    """A solved point violates Im m_t > 0 / Im(z m_t) > 0 / Re b_t > 0."""


class EdgeBracketError(RuntimeError):
    """No sign change of Phi_t' found in the scan window."""


@dataclass(frozen=True)
class GdmModel:
    """Noise level t, variables-side base spectrum {d_j}, and dimensions.

    ``base_spectrum`` holds the p eigenvalues of B*B (descending). Use
    ``from_nn_spectrum`` when starting from the n x n Gram spectrum: the
    nonzero eigenvalues coincide, padded or truncated with exact zeros.
    """

    t: float
    base_spectrum: np.ndarray
    ratio: AspectRatio

    def __post_init__(self):
        if not 0.0 < self.t < 1.0:
            raise ValueError("t must lie in (0, 1)")
        d = np.asarray(self.base_spectrum, dtype=float)
        if self.ratio.p is None or self.ratio.n is None:
            raise ValueError("GdmModel needs both dimensions on the ratio")
        if d.size != self.ratio.p:
            raise ValueError(f"base spectrum must have length p={self.ratio.p}")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ValueError("base spectrum must be finite and nonnegative")
        if np.any(np.diff(d) > 1e-12):
            raise ValueError("base spectrum must be descending")

    @property
    def q(self) -> float:
        """MP parameter of the variables-side spectrum: p/n."""
        return self.ratio.p / self.ratio.n

    @classmethod
    def from_nn_spectrum(cls, t: float, nn_eigs: Sequence[float], ratio: AspectRatio) -> "GdmModel":
        ev = np.sort(np.asarray(nn_eigs, dtype=float))[::-1]
        p = ratio.p
        if ev.size >= p:
            d = ev[:p]
        else:
            d = np.concatenate([ev, np.zeros(p - ev.size)])
        return cls(t=t, base_spectrum=d, ratio=ratio)

    @classmethod
    def from_base_matrix(cls, t: float, B: np.ndarray, ratio: AspectRatio) -> "GdmModel":
        d = np.linalg.eigvalsh(B.T @ B)[::-1]
        return cls(t=t, base_spectrum=np.maximum(d, 0.0), ratio=ratio)


@dataclass(frozen=True)
class GdmPoint:
    z: complex
    m_t: complex
    b_t: complex
    zeta_t: complex
    residual: float


def _check_point(model: GdmModel, pt: GdmPoint, residual_tol: float = 1e-9):
    z = pt.z
    if z.imag > 0:
        if pt.m_t.imag <= 0:
            raise NevanlinnaViolation(f"Im m_t <= 0 at z={z}")
        if (z * pt.m_t).imag <= 0:
            raise NevanlinnaViolation(f"Im(z m_t) <= 0 at z={z}")
        if pt.zeta_t.imag <= 0:
            raise NevanlinnaViolation(f"Im zeta_t <= 0 at z={z}")
    if pt.b_t.real <= 0:
        raise NevanlinnaViolation(f"Re b_t <= 0 at z={z}")
    bound = (model.q * model.t * abs(z)) ** -0.5
    if abs(pt.m_t) > bound * (1 + 1e-6):
        raise NevanlinnaViolation(f"|m_t| exceeds (q t |z|)^(-1/2) at z={z}")
    if pt.residual > residual_tol * max(1.0, abs(pt.m_t)):
        raise FixedPointDivergence(pt.residual, MAX_ITER)


def solve_mt(model: GdmModel, z: complex, check: bool = True) -> GdmPoint:
    """Solve the self-consistent equation at one point by damped iteration."""
    zc = complex(z)
    ms, res, _ = fp_batch(
        np.array([zc]), model.base_spectrum, model.q, model.t, SOLVE_TOL, MAX_ITER, False
    )
    m = complex(ms[0])
    b = 1.0 + model.t * model.q * m
    zeta = b * b * zc - model.t * (1.0 - model.q) * b
    pt = GdmPoint(z=zc, m_t=m, b_t=complex(b), zeta_t=complex(zeta), residual=float(res[0]))
    if check:
        _check_point(model, pt)
    return pt


def solve_mt_grid(model: GdmModel, zs: np.ndarray, check: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Warm-started batch solve along a grid; returns (m values, residuals)."""
    zs = np.asarray(zs, dtype=complex)
    ms, res, _ = fp_batch(zs, model.base_spectrum, model.q, model.t, SOLVE_TOL, MAX_ITER, True)
    if check:
        bad = res > 1e-9 * np.maximum(1.0, np.abs(ms))
        if np.any(bad):
            idx = int(np.argmax(bad))
            raise FixedPointDivergence(float(res[idx]), MAX_ITER)
    return ms, res


def trace_side_m(model: GdmModel, z: complex, m_pp: complex) -> complex:
    """Dimension-side transform via the exact rank relation."""
    q = model.q
    return q * m_pp - (1.0 - q) / z


def base_resolvent_mean(model: GdmModel, zeta) -> np.ndarray:
    zeta = np.asarray(zeta, dtype=complex)
    return np.mean(1.0 / (model.base_spectrum[None, :] - zeta[..., None]), axis=-1)


def phi_t(model: GdmModel, zeta) -> complex:
    """Subordination inverse Phi_t(zeta); pole error near a base eigenvalue."""
    zeta_c = complex(zeta)
    gap = np.min(np.abs(model.base_spectrum - zeta_c))
    if gap < 1e-12 * max(1.0, abs(zeta_c)):
        raise ZeroDivisionError(f"zeta={zeta_c} collides with a base eigenvalue")
    m0 = complex(base_resolvent_mean(model, np.array([zeta_c]))[0])
    u = 1.0 - model.q * model.t * m0
    return complex(zeta_c * u * u + (1.0 - model.q) * model.t * u)


def phi_t_prime(model: GdmModel, zeta: float) -> float:
    d = model.base_spectrum
    q, t = model.q, model.t
    m0 = float(np.mean(1.0 / (d - zeta)))
    m0p = float(np.mean(1.0 / (d - zeta) ** 2))
    u = 1.0 - q * t * m0
    return u * u - 2.0 * zeta * u * q * t * m0p - (1.0 - q) * q * t * t * m0p


def gdm_edge(model: GdmModel, scan_width: float = 1.0) -> tuple[float, float, float]:
    """(zeta_+, lambda_{+,t}, xi_+): rightmost critical point of Phi_t.

    Scans Phi_t' on (d_1, d_1 + scan_width] and bisects the rightmost sign
    change from - to +; Phi_t' -> 1 at infinity and -> -inf at d_1+, so one
    exists. Interior sign changes (multi-cut base spectra) are not located.
    """
    d1 = float(model.base_spectrum.max())
    offsets = np.geomspace(1e-9, scan_width, EDGE_SCAN_POINTS)
    vals = np.array([phi_t_prime(model, d1 + off) for off in offsets])
    signs = np.sign(vals)
    flips = np.where((signs[:-1] < 0) & (signs[1:] > 0))[0]
    if flips.size == 0:
        grid_repr = ", ".join(f"{d1 + o:.3g}:{v:.2g}" for o, v in list(zip(offsets, vals))[::80])
        raise EdgeBracketError(
            f"no - to + sign change of Phi_t' in ({d1}, {d1 + scan_width}]; scan: {grid_repr}"
        )
    i = int(flips[-1])
    zeta_plus = float(
        brentq(lambda x: phi_t_prime(model, x), d1 + offsets[i], d1 + offsets[i + 1], xtol=1e-13)
    )
    lam_plus = float(np.real(phi_t(model, zeta_plus)))
    return zeta_plus, lam_plus, zeta_plus - d1


def gdm_density(model: GdmModel, E_grid: Sequence[float], eta0: float = 1e-5) -> np.ndarray:
    """Variables-side density pi^{-1} Im m_t(E + i eta0) on a grid."""
    E = np.asarray(E_grid, dtype=float)
    if np.any(E < 0):
        raise ValueError("density grid must be nonnegative")
    ms, _ = solve_mt_grid(model, E + 1j * eta0)
    return np.imag(ms) / np.pi


def nn_density_view(model: GdmModel, density_pp: np.ndarray) -> tuple[np.ndarray, float]:
    """Dimension-side density and zero-atom: q * rho_pp with atom (1 - q)_+."""
    q = model.q
    return q * np.asarray(density_pp, dtype=float), max(0.0, 1.0 - q)


def backend_name() -> str:
    return BACKEND
