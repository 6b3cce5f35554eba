"""Regularly-varying laws with exactly constructed tails, and self-normalization.

The law family: a two-sided power tail P(|xi| > x) = l(x)/x^alpha holding
exactly for x >= x0, grafted onto a uniform core inside (-x0, x0). The core
interval is solved in closed form so that the mixture has mean 0 and variance
1 exactly. Asymmetry comes from unequal left/right tail weights with a
compensating core shift. x0 defaults to 3 but is raised automatically when
the tail alone would exceed the variance budget (the tail second moment is
capped at 0.9 so the core stays nondegenerate); the resolved value is stored
on the law.

Sampling is inverse-CDF, rejection-free, driven by a counter-based Philox
generator keyed by (master seed, stream), so results do not depend on the
parallel schedule.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import gamma as gamma_fn

TAIL_VARIANCE_BUDGET = 0.9
DEFAULT_X0 = 3.0
DEFAULT_ASYMMETRIC_SPLIT = 0.65


class DegenerateColumnError(ValueError):
    """A column of X is identically zero; self-normalization is undefined."""


class InsufficientMomentsError(ValueError):
    """The requested expansion needs moments the law does not have."""


@dataclass(frozen=True)
class Const:
    """Slowly varying l(x) = c."""

    c: float = 1.0

    def __call__(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.c)

    def describe(self) -> str:
        return f"const({self.c:g})"


@dataclass(frozen=True)
class LogPower:
    """Slowly varying l(x) = (log x)^gamma for x >= e; gamma may be negative."""

    gamma: float

    def __call__(self, x):
        return np.log(np.asarray(x, dtype=float)) ** self.gamma

    def describe(self) -> str:
        return f"logpow({self.gamma:g})"


SlowlyVarying = Union[Const, LogPower]


class CriticalKind(enum.Enum):
    ZERO = "Zero"
    POSITIVE_FINITE = "PositiveFinite"
    INFINITE = "Infinite"


@dataclass(frozen=True)
class CriticalCondition:
    kind: CriticalKind
    value: Optional[float] = None  # the finite positive limit, when it exists


def _tail_prob_unit(x, alpha: float, sv: SlowlyVarying):
    """P(|xi| > x) = l(x)/x^alpha for x >= x0 (unit total tail convention)."""
    x = np.asarray(x, dtype=float)
    return sv(x) / x**alpha


def _tail_moment(k: int, x0: float, alpha: float, sv: SlowlyVarying) -> float:
    """E[|xi|^k 1(|xi| > x0)] for the exact-tail construction (total weight)."""
    pm = float(_tail_prob_unit(x0, alpha, sv))
    if isinstance(sv, Const):
        if k >= alpha:
            return math.inf
        return x0**k * pm + k * sv.c * x0 ** (k - alpha) / (alpha - k)
    if k >= alpha:
        return math.inf
    val = quad(lambda x: k * x ** (k - 1) * float(sv(x)) / x**alpha, x0, np.inf, limit=200)[0]
    return x0**k * pm + val


def _resolve_x0(alpha: float, sv: SlowlyVarying, requested: float) -> float:
    """Smallest x0 >= requested keeping the tail second moment <= budget."""

    def excess(x0):
        return _tail_moment(2, x0, alpha, sv) - TAIL_VARIANCE_BUDGET

    if excess(requested) <= 0:
        return requested
    hi = requested
    while excess(hi) > 0:
        hi *= 2
        if hi > 1e9:
            raise ValueError(f"cannot standardize a tail with alpha={alpha}")
    return float(brentq(excess, requested, hi, xtol=1e-12))


@dataclass(frozen=True)
class TailLaw:
    """A standardized regularly-varying law; construct via ``TailLaw.build``."""

    alpha: float
    slowly_varying: SlowlyVarying
    symmetric: bool
    x0: float
    tail_split: float  # right-tail share of the total tail probability
    core_lo: float
    core_hi: float
    scale: float = 1.0  # standardization is exact by construction

    @classmethod
    def build(
        cls,
        alpha: float,
        slowly_varying: SlowlyVarying = Const(1.0),
        symmetric: bool = True,
        x0: float = DEFAULT_X0,
        tail_split: Optional[float] = None,
    ) -> "TailLaw":
        if not 2.0 < alpha <= 4.0:
            raise ValueError(f"alpha must lie in (2, 4], got {alpha}")
        if tail_split is None:
            tail_split = 0.5 if symmetric else DEFAULT_ASYMMETRIC_SPLIT
        if symmetric and tail_split != 0.5:
            raise ValueError("a symmetric law needs tail_split = 0.5")
        x0r = _resolve_x0(alpha, slowly_varying, x0)
        pm = float(_tail_prob_unit(x0r, alpha, slowly_varying))
        if pm >= 1:
            raise ValueError("tail mass at x0 exceeds one; raise x0")
        t1 = _tail_moment(1, x0r, alpha, slowly_varying)
        t2 = _tail_moment(2, x0r, alpha, slowly_varying)
        sp, sm = tail_split, 1.0 - tail_split
        core_mass = 1.0 - pm
        mu_c = -(sp - sm) * t1 / core_mass
        v2 = (1.0 - t2) / core_mass
        width_sq = 12.0 * (v2 - mu_c**2)
        if width_sq <= 0:
            raise ValueError("core degenerate; tail variance leaves no budget")
        half = math.sqrt(width_sq) / 2
        lo, hi = mu_c - half, mu_c + half
        if not (-x0r < lo < hi < x0r):
            raise ValueError("core interval escapes (-x0, x0); adjust parameters")
        return cls(
            alpha=alpha,
            slowly_varying=slowly_varying,
            symmetric=symmetric,
            x0=x0r,
            tail_split=tail_split,
            core_lo=lo,
            core_hi=hi,
        )

    # -- exact distribution functions -------------------------------------
    @property
    def tail_mass(self) -> float:
        return float(_tail_prob_unit(self.x0, self.alpha, self.slowly_varying))

    def tail_prob(self, x):
        """P(|xi| > x), exact for x >= x0."""
        x = np.asarray(x, dtype=float)
        if np.any(x < self.x0):
            raise ValueError("tail_prob is the exact tail only for x >= x0")
        return _tail_prob_unit(x, self.alpha, self.slowly_varying)

    def mean(self) -> float:
        sp, sm = self.tail_split, 1.0 - self.tail_split
        t1 = _tail_moment(1, self.x0, self.alpha, self.slowly_varying)
        core = (1.0 - self.tail_mass) * (self.core_lo + self.core_hi) / 2
        return (sp - sm) * t1 + core

    def variance(self) -> float:
        t2 = _tail_moment(2, self.x0, self.alpha, self.slowly_varying)
        a, b = self.core_lo, self.core_hi
        core2 = (1.0 - self.tail_mass) * (a * a + a * b + b * b) / 3
        return t2 + core2 - self.mean() ** 2

    def moment(self, k: int) -> float:
        """E xi^k, exact; raises when the tail makes it infinite (k >= alpha)."""
        if k >= self.alpha:
            raise InsufficientMomentsError(f"E|xi|^{k} is infinite for alpha={self.alpha}")
        sp, sm = self.tail_split, 1.0 - self.tail_split
        tk = _tail_moment(k, self.x0, self.alpha, self.slowly_varying)
        tail = (sp + (-1) ** k * sm) * tk
        a, b = self.core_lo, self.core_hi
        core = (1.0 - self.tail_mass) * (b ** (k + 1) - a ** (k + 1)) / ((k + 1) * (b - a))
        return tail + core

    # -- sampling ----------------------------------------------------------
    def _invert_tail(self, w: np.ndarray) -> np.ndarray:
        """x >= x0 with l(x)/x^alpha = w (w <= tail value at x0)."""
        sv, al = self.slowly_varying, self.alpha
        if isinstance(sv, Const):
            return (sv.c / w) ** (1.0 / al)
        # Newton in v = log x on alpha*v - gamma*log(v) = -log w
        g = sv.gamma
        target = -np.log(w)
        v = np.maximum(np.log(self.x0), target / al)
        for _ in range(80):
            fv = al * v - g * np.log(v) - target
            v = v - fv / (al - g / v)
        return np.exp(v)

    def sample(self, shape, rng: np.random.Generator) -> np.ndarray:
        """Inverse-CDF draw; the uniform buffer is transformed in place."""
        sp = self.tail_split
        pl = (1.0 - sp) * self.tail_mass
        pr = sp * self.tail_mass
        u = rng.random(shape)
        right = u > 1.0 - pr
        left = u < pl
        ur = u[right]
        ul = u[left]
        np.subtract(u, pl, out=u)
        np.multiply(u, (self.core_hi - self.core_lo) / (1.0 - self.tail_mass), out=u)
        np.add(u, self.core_lo, out=u)
        if ur.size:
            u[right] = self._invert_tail((1.0 - ur) / sp)
        if ul.size:
            u[left] = -self._invert_tail(ul / (1.0 - sp))
        return u

    def describe(self) -> dict:
        """Structured description; feeding it back as a [law] config section
        reconstructs the identical law (x0 resolution is idempotent)."""
        if isinstance(self.slowly_varying, Const):
            l_name, l_param = "const", self.slowly_varying.c
        else:
            l_name, l_param = "logpow", self.slowly_varying.gamma
        return {
            "family": "tail",
            "alpha": self.alpha,
            "l": l_name,
            "l_param": l_param,
            "symmetric": self.symmetric,
            "x0": self.x0,
            "tail_split": self.tail_split,
            "core": [self.core_lo, self.core_hi],
        }


@dataclass(frozen=True)
class NormalLaw:
    """Standard normal entries; the light-tailed reference for calibration."""

    def sample(self, shape, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal(shape)

    def moment(self, k: int) -> float:
        if k % 2 == 1:
            return 0.0
        return float(math.prod(range(k - 1, 0, -2))) if k else 1.0

    def describe(self) -> dict:
        return {"family": "normal"}


@dataclass(frozen=True)
class SelfNormalized:
    """Y with unit-norm columns: Y_ij = X*_ij / rho_j, rho_j^2 = (XX*)_jj."""

    Y: np.ndarray  # n x p
    rho: np.ndarray  # p
    X_dims: tuple[int, int]  # (p, n)


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator for a derived stream; schedule-independent."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=tuple(stream))))


def sample_matrix(law, n: int, p: int, seed: int) -> np.ndarray:
    """p x n data matrix with i.i.d. entries from ``law``, deterministic in seed."""
    if n < 2 or p < 2:
        raise ValueError("need n, p >= 2")
    return law.sample((p, n), rng_for(seed, 0))


def self_normalize(X: np.ndarray) -> SelfNormalized:
    """Y = X* diag(S)^{-1/2} with S = XX*; exact unit column norms."""
    X = np.asarray(X, dtype=float)
    p, n = X.shape
    rho = np.sqrt(np.einsum("ij,ij->i", X, X))
    if np.any(rho == 0):
        raise DegenerateColumnError("a row of X is identically zero")
    Y = X.T / rho[None, :]
    return SelfNormalized(Y=Y, rho=rho, X_dims=(p, n))


def asymptotic_even_moment(alpha: float, k: int, n: int, law: Optional[TailLaw] = None) -> float:
    """Leading-order E(Y_11^{2k}) = [alpha G(a/2) G(k-a/2) / (2 G(k))] l(sqrt n)/n^{a/2}.

    The k = 1 case is exact and law-free: E(Y^2) = 1/n by column exchangeability.
    """
    if k == 1:
        return 1.0 / n
    if k < 1:
        raise ValueError("k must be a positive integer")
    if not 2.0 < alpha <= 4.0:
        raise ValueError("alpha must lie in (2, 4]")
    arg = k - alpha / 2
    if arg <= 0 and abs(arg - round(arg)) < 1e-12:
        raise ValueError(f"Gamma pole at k - alpha/2 = {arg}")
    sv = law.slowly_varying if law is not None else Const(1.0)
    l_val = float(sv(np.sqrt(n)))
    coeff = alpha * gamma_fn(alpha / 2) * gamma_fn(arg) / (2 * gamma_fn(k))
    return float(coeff * l_val / n ** (alpha / 2))


def critical_condition(law: TailLaw) -> CriticalCondition:
    """Classify lim x^3 P(|xi| > x) analytically from (alpha, l)."""
    if law.alpha > 3.0:
        return CriticalCondition(CriticalKind.ZERO)
    if law.alpha < 3.0:
        return CriticalCondition(CriticalKind.INFINITE)
    sv = law.slowly_varying
    if isinstance(sv, Const):
        return CriticalCondition(CriticalKind.POSITIVE_FINITE, value=sv.c)
    if sv.gamma < 0:
        return CriticalCondition(CriticalKind.ZERO)
    if sv.gamma > 0:
        return CriticalCondition(CriticalKind.INFINITE)
    return CriticalCondition(CriticalKind.POSITIVE_FINITE, value=1.0)


def cumulants_from_moments(moments: Sequence[float], order: Optional[int] = None) -> list[float]:
    """kappa_1..kappa_q from raw moments m_1..m_q by the standard recursion."""
    m = [float(x) for x in moments]
    q = order or len(m)
    if q > len(m):
        raise InsufficientMomentsError(f"need {q} moments, got {len(m)}")
    kappa: list[float] = []
    for r in range(1, q + 1):
        acc = m[r - 1]
        for j in range(1, r):
            acc -= math.comb(r - 1, j - 1) * kappa[j - 1] * m[r - j - 1]
        kappa.append(acc)
    return kappa


def _poly_expectation(coeffs: Sequence[float], moment_of) -> float:
    return sum(c * moment_of(k) for k, c in enumerate(coeffs) if c)


def cumulant_expansion_residual(moment_source, f_coeffs: Sequence[float], ell: int) -> float:
    """|E(xi f(xi)) - sum_{k<=ell} kappa_{k+1}/k! E f^(k)(xi)| with exact moments.

    ``moment_source`` is a law with .moment(k) (TailLaw, NormalLaw, ...) or a
    plain sequence of raw moments m_1, m_2, ....
    """
    coeffs = [float(c) for c in f_coeffs]
    deg = len(coeffs) - 1
    needed = deg + ell + 2
    if hasattr(moment_source, "moment"):
        try:
            raw = [moment_source.moment(k) for k in range(1, needed + 1)]
        except InsufficientMomentsError as exc:
            raise InsufficientMomentsError(str(exc)) from exc
    else:
        raw = [float(x) for x in moment_source]
        if len(raw) < needed:
            raise InsufficientMomentsError(f"need moments up to order {needed}, got {len(raw)}")

    def moment_of(k: int) -> float:
        return 1.0 if k == 0 else raw[k - 1]

    lhs = _poly_expectation([0.0] + coeffs, moment_of)  # E(xi * f(xi))
    kappas = cumulants_from_moments(raw, ell + 1)
    rhs = 0.0
    dk = list(coeffs)
    for k in range(0, ell + 1):
        rhs += kappas[k] / math.factorial(k) * _poly_expectation(dk, moment_of)
        dk = [dk[j] * j for j in range(1, len(dk))]  # polynomial derivative
        if not dk:
            dk = [0.0]
    return abs(lhs - rhs)


def gaussian_moments(order: int) -> list[float]:
    return [NormalLaw().moment(k) for k in range(1, order + 1)]


def two_point_moments(order: int) -> list[float]:
    """Raw moments of the symmetric two-point law on {-1, +1}."""
    return [0.0 if k % 2 else 1.0 for k in range(1, order + 1)]


def odd_moment_estimate(law, n: int, mc_samples: int, seed: int) -> tuple[float, float]:
    """Monte Carlo estimate of beta_{1,1} = E(Y_11 Y_21) with standard error.

    Uses the exchangeable column statistic ((sum_i Y_i)^2 - 1)/(n(n-1)), which
    averages Y_i Y_k over all off-diagonal pairs and is exactly mean-zero in
    expectation for symmetric laws.
    """
    if mc_samples < 10_000:
        raise ValueError("need at least 1e4 Monte Carlo columns")
    g = rng_for(seed, 1)
    block = max(1, min(mc_samples, 8_000_000 // n))
    stats = np.empty(mc_samples)
    done = 0
    while done < mc_samples:
        b = min(block, mc_samples - done)
        X = law.sample((b, n), g)
        r2 = np.einsum("ij,ij->i", X, X)
        s = np.sum(X, axis=1)
        stats[done : done + b] = (s * s / r2 - 1.0) / (n * (n - 1))
        done += b
    return float(stats.mean()), float(stats.std(ddof=1) / np.sqrt(mc_samples))


@dataclass(frozen=True)
class MomentTable:
    """Selected beta moments of self-normalized entries with their provenance."""

    beta: dict
    source: str  # 'analytic' | 'monte-carlo'
    stderr: Optional[dict] = None


def moment_table(law, n: int, mc_columns: int = 20_000, seed: int = 0) -> MomentTable:
    """beta_2 (exact), beta_4 (Monte Carlo), beta_{1,1} (Monte Carlo)."""
    g = rng_for(seed, 2)
    block = max(1, min(mc_columns, 8_000_000 // n))
    b4 = np.empty(mc_columns)
    b11 = np.empty(mc_columns)
    done = 0
    while done < mc_columns:
        b = min(block, mc_columns - done)
        X = law.sample((b, n), g)
        r2 = np.einsum("ij,ij->i", X, X)
        X2 = X * X
        b4[done : done + b] = np.einsum("ij,ij->i", X2, X2) / r2**2 / n
        s = np.sum(X, axis=1)
        b11[done : done + b] = (s * s / r2 - 1.0) / (n * (n - 1))
        done += b
    beta = {"2": 1.0 / n, "4": float(b4.mean()), "1,1": float(b11.mean())}
    err = {
        "4": float(b4.std(ddof=1) / np.sqrt(mc_columns)),
        "1,1": float(b11.std(ddof=1) / np.sqrt(mc_columns)),
    }
    return MomentTable(beta=beta, source="monte-carlo", stderr=err)
