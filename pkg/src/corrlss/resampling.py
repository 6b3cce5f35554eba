"""Banded decomposition X* = L + M + H and the diagonal analogue for diag(S).

Entries are split by magnitude at n^{-eps_l} and n^{1/2 - eps_h} into
light/medium/heavy bands with 0/1 label matrices Psi (heavy) and Chi (medium);
diagonal deviations n^{-1} rho_j^2 - 1 are split at n^{-eps_s} and n^{eps_h}
with the combined flag vector Pi. The decomposition is a deterministic banding
of the realized matrix: entries are copied, never recomputed, so the
reconstruction L + M + H = X* is bit-exact. (Conditionally on the labels this
has the same joint law as resampling fresh variables from the band-restricted
distributions, because those conditional laws are exactly the restrictions.)
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ControlParams:
    """The small exponents controlling the bands; see ``defaults``.

    Invariants: 0 < eps_l < min(eps_h, eps_y, 4 - alpha)/1000,
    0 < eps_h < (alpha-2)/(10 alpha), 0 < eps_s <= (alpha-2)/(6 alpha),
    0 < eps_y < (alpha-2)/(10 alpha), beta_exp = 1/alpha + 1/2 + 2 eps_s < 1,
    0 < eps_mu < min(eps_h, eps_s, 1 - beta_exp, eps_y)/2.
    """

    alpha: float
    eps_l: float
    eps_h: float
    eps_s: float
    eps_y: float
    eps_mu: float

    def __post_init__(self):
        a = self.alpha
        if not 2.0 < a <= 4.0:
            raise ValueError("alpha must lie in (2, 4]")
        # for alpha = 4 the (4 - alpha) cap degenerates; only positivity binds
        eps_l_cap = min(self.eps_h, self.eps_y, 4.0 - a) / 1000 if a < 4.0 else np.inf
        if not 0 < self.eps_l < eps_l_cap:
            raise ValueError("eps_l violates its bound")
        if not 0 < self.eps_h < (a - 2) / (10 * a):
            raise ValueError("eps_h violates its bound")
        if not 0 < self.eps_s <= (a - 2) / (6 * a):
            raise ValueError("eps_s violates its bound")
        if not 0 < self.eps_y < (a - 2) / (10 * a):
            raise ValueError("eps_y violates its bound")
        if not self.beta_exp < 1:
            raise ValueError("beta exponent must stay below 1")
        cap = min(self.eps_h, self.eps_s, 1 - self.beta_exp, self.eps_y) / 2
        if not 0 < self.eps_mu < cap:
            raise ValueError("eps_mu violates its bound")

    @property
    def beta_exp(self) -> float:
        return 1.0 / self.alpha + 0.5 + 2.0 * self.eps_s

    @classmethod
    def defaults(cls, alpha: float) -> "ControlParams":
        """Strict-inequality midpoints: eps_h = eps_y = (a-2)/(20a),
        eps_s = (a-2)/(6a), eps_l = min(eps_h, eps_y, 4-a)/2000."""
        eps_h = (alpha - 2) / (20 * alpha)
        eps_y = eps_h
        eps_s = (alpha - 2) / (6 * alpha)
        if alpha < 4:
            eps_l = min(eps_h, eps_y, 4 - alpha) / 2000
        else:
            eps_l = eps_h / 2000
        beta = 1.0 / alpha + 0.5 + 2 * eps_s
        eps_mu = min(eps_h, eps_s, 1 - beta, eps_y) / 4
        return cls(alpha=alpha, eps_l=eps_l, eps_h=eps_h, eps_s=eps_s, eps_y=eps_y, eps_mu=eps_mu)


@dataclass(frozen=True)
class Decomposition:
    L: np.ndarray  # n x p, |entry| < n^-eps_l
    M: np.ndarray  # n x p, n^-eps_l <= |entry| < n^(1/2-eps_h)
    H: np.ndarray  # n x p, |entry| >= n^(1/2-eps_h)
    Psi: np.ndarray  # 0/1, heavy labels
    Chi: np.ndarray  # 0/1, medium labels
    thresholds: tuple[float, float]  # (t_low, t_high)


@dataclass(frozen=True)
class DiagDecomposition:
    LS: np.ndarray
    MS: np.ndarray
    HS: np.ndarray
    Pi: np.ndarray  # 0/1 flags phi_j or omega_j
    thresholds: tuple[float, float]  # (n^-eps_s, n^eps_h)


def decompose(X: np.ndarray, params: ControlParams) -> Decomposition:
    """Band X* = L + M + H by entry magnitude; exact reconstruction."""
    Xs = np.asarray(X, dtype=float).T  # n x p
    n = Xs.shape[0]
    t_low = float(n) ** (-params.eps_l)
    t_high = float(n) ** (0.5 - params.eps_h)
    a = np.abs(Xs)
    psi = a >= t_high
    chi = (a >= t_low) & ~psi
    light = ~(psi | chi)
    L = np.where(light, Xs, 0.0)
    M = np.where(chi, Xs, 0.0)
    H = np.where(psi, Xs, 0.0)
    return Decomposition(
        L=L,
        M=M,
        H=H,
        Psi=psi.astype(np.int8),
        Chi=chi.astype(np.int8),
        thresholds=(t_low, t_high),
    )


def diag_decompose(X: np.ndarray, params: ControlParams) -> DiagDecomposition:
    """Split n^{-1} diag(S) - 1 into LS + MS + HS by deviation magnitude."""
    X = np.asarray(X, dtype=float)
    p, n = X.shape
    v = np.einsum("ij,ij->i", X, X) / n - 1.0
    lo = float(n) ** (-params.eps_s)
    hi = float(n) ** params.eps_h
    a = np.abs(v)
    phi_flag = a >= hi
    omega_flag = (a >= lo) & ~phi_flag
    light = ~(phi_flag | omega_flag)
    return DiagDecomposition(
        LS=np.where(light, v, 0.0),
        MS=np.where(omega_flag, v, 0.0),
        HS=np.where(phi_flag, v, 0.0),
        Pi=(phi_flag | omega_flag).astype(np.int8),
        thresholds=(lo, hi),
    )


def well_configured(
    dec: Decomposition, diag: DiagDecomposition, params: ControlParams, n: int
) -> tuple[bool, bool, dict]:
    """Psi is well configured iff #ones <= n^(1-eps_y); Pi iff #ones <= n^beta."""
    psi_count = int(dec.Psi.sum())
    pi_count = int(diag.Pi.sum())
    psi_cap = float(n) ** (1.0 - params.eps_y)
    pi_cap = float(n) ** params.beta_exp
    counts = {
        "psi_ones": psi_count,
        "pi_ones": pi_count,
        "psi_cap": psi_cap,
        "pi_cap": pi_cap,
    }
    return psi_count <= psi_cap, pi_count <= pi_cap, counts


def diag_s_diagnostics(
    X: np.ndarray, s: int, alpha: float, slack: float = 10.0
) -> tuple[float, float, bool]:
    """tr |diag(S)^{-s} - n^{-s} I| against the rate C n^{-(s-1)-(alpha-2)/(6 alpha)}."""
    if s not in (1, 2, 3):
        raise ValueError("s must be 1, 2 or 3")
    X = np.asarray(X, dtype=float)
    p, n = X.shape
    rho2 = np.einsum("ij,ij->i", X, X)
    trace_dev = float(np.sum(np.abs(rho2 ** (-s) - float(n) ** (-s))))
    bound = slack * float(n) ** (-(s - 1) - (alpha - 2) / (6 * alpha))
    return trace_dev, bound, trace_dev <= bound


def estimate_noise_level(dec: Decomposition, rho: np.ndarray, n: int) -> float:
    """t = n * mean(L_ij^2 / rho_j^2) over the nonzero support of L."""
    mask = dec.L != 0
    if not np.any(mask):
        return 0.0
    ratios = (dec.L**2 / rho[None, :] ** 2)[mask]
    return float(n * ratios.mean())
