"""Asymptotic mean and variance of linear spectral statistics of R.

For the n x n sample correlation matrix R = YY* with n/p -> phi, the
centered LSS (tr f(R) - a_f)/sigma_f is asymptotically standard normal.
This module evaluates the contour formulas for a_f and sigma_f^2.

Transform pair. The integrands involve a Stieltjes transform m and its
companion m_under = phi*m - (1-phi)/z. The only pair satisfying the
requirements the formulas impose (the self-consistency
1 + z*m*(1 + m_under/phi) = 0, which in particular forces sigma_{f=x} = 0
since tr R = p is deterministic) is

    m_under(z) = MP-transform with parameter q = p/n  (the PbyP spectrum law)
    m(z)       = q*m_under(z) - (1-q)/z               (the NbyN spectrum law)

i.e. the MP parameter that fits the correlation spectrum is q = p/n while the
formulas' phi is n/p. ``experiments.mp_fit_calibration`` confirms the
identification empirically; every function here takes the trace-side ratio
(phi = n/p) and builds the pair internally.

Mean centering. ``mean_aF`` evaluates the contour formula verbatim. Its value
carries a small O(1) offset against the exact finite-n mean (for f = x it
gives p - 2p/n while tr R = p exactly). ``mean_refined`` therefore computes
the centering used by the Monte Carlo experiments,

    a_f = p * int f dMP_q + (n-p)_+ f(0) - mu_edge(f),
    mu_edge(f) = [f(l-) + f(l+)]/4 - (1/2 pi) int f(x)/sqrt(4q - (x-1-q)^2) dx,

which matches the exact Schott moments (f = x, x^2, x^3) identically and
Monte Carlo for higher polynomials.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .contour import Contour, build_contour, contour_integrate, default_params, disjoint_pair
from .mp_law import AspectRatio, mp_edges, mp_stieltjes_prime_vec, mp_stieltjes_vec


class PoleProximityError(ValueError):
    """A quadrature node is too close to a zero of 1 + phi^{-1} m_under."""


class CoincidenceError(ValueError):
    """z1 and z2 coincide; the variance kernel derivative is singular there."""


@dataclass(frozen=True)
class TestFunction:
    """Test function f: polynomial (ascending coefficients) or generic analytic."""

    __test__ = False  # keep pytest from collecting this as a test class

    label: str
    coefficients: Optional[tuple[float, ...]] = None
    func: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.coefficients is None and self.func is None:
            raise ValueError("provide polynomial coefficients or a callable")
        if self.coefficients is not None and not all(np.isfinite(self.coefficients)):
            raise ValueError("polynomial coefficients must be finite")

    @classmethod
    def polynomial(cls, coefficients: Sequence[float], label: Optional[str] = None) -> "TestFunction":
        coeffs = tuple(float(c) for c in coefficients)
        if label is None:
            label = " + ".join(f"{c:g}*x^{k}" for k, c in enumerate(coeffs) if c) or "0"
        return cls(label=label, coefficients=coeffs)

    @classmethod
    def monomial(cls, degree: int, scale: float = 1.0) -> "TestFunction":
        coeffs = [0.0] * degree + [float(scale)]
        return cls.polynomial(coeffs, label=f"{scale:g}*x^{degree}" if scale != 1 else f"x^{degree}")

    @classmethod
    def analytic(cls, func: Callable, label: str) -> "TestFunction":
        return cls(label=label, func=func)

    @property
    def is_polynomial(self) -> bool:
        return self.coefficients is not None

    def __call__(self, z):
        if self.coefficients is not None:
            return np.polynomial.polynomial.polyval(z, self.coefficients)
        return self.func(z)

    def scaled(self, c: float) -> "TestFunction":
        if self.is_polynomial:
            return TestFunction.polynomial([c * a for a in self.coefficients], label=f"{c:g}*({self.label})")
        return TestFunction.analytic(lambda z: c * self.func(z), label=f"{c:g}*({self.label})")


@dataclass
class CltTarget:
    """Theory values for one (f, ratio): a_f used for centering, sigma2_f, diagnostics."""

    a_f: float
    sigma2_f: float
    f: TestFunction
    ratio: AspectRatio
    diagnostics: dict = field(default_factory=dict)
    variance_clamped: bool = False

    def to_json(self) -> str:
        payload = {
            "a_f": self.a_f,
            "sigma2_f": self.sigma2_f,
            "f": self.f.label,
            "phi": self.ratio.phi,
            "n": self.ratio.n,
            "p": self.ratio.p,
            "diagnostics": self.diagnostics,
            "variance_clamped": self.variance_clamped,
        }
        return json.dumps(payload, sort_keys=True)


def _dims(ratio: AspectRatio) -> tuple[int, int]:
    if ratio.n is None or ratio.p is None:
        raise ValueError("CLT targets need both dimensions on the ratio")
    return ratio.n, ratio.p


def _spectral_ratio(ratio: AspectRatio) -> AspectRatio:
    """MP parameter of the PbyP correlation spectrum: the mirrored ratio."""
    return ratio.swapped()


def _pair(z: np.ndarray, ratio: AspectRatio):
    """(m, m_under, m_under') on the nodes, with m the NbyN-side transform."""
    dual = _spectral_ratio(ratio)
    q = dual.phi
    mu = mp_stieltjes_vec(z, dual)
    mup = mp_stieltjes_prime_vec(z, dual)
    m = q * mu - (1.0 - q) / z
    return m, mu, mup, q


def mean_aF(f: TestFunction, ratio: AspectRatio, contour: Optional[Contour] = None) -> float:
    """Contour evaluation of the asymptotic-mean formula.

    a_f = -(1/2 pi i) * closed-integral of
          f(z) (-n + 2 z (1 + z m) m_under - phi^{-1}[z m_under]') / (z (1 + phi^{-1} m_under)),
    with [z m_under]' expanded as m_under + z m_under' and n = ratio.n. The
    overall sign makes the value a centering (the Cauchy formula for traces
    carries -(1/2 pi i) for counterclockwise contours).
    """
    n, p = _dims(ratio)
    if contour is None:
        contour = build_contour(_spectral_ratio(ratio), _formula_params(ratio))

    def integrand(z):
        m, mu, mup, q = _pair(z, ratio)
        den_factor = 1.0 + q * mu
        if np.any(np.abs(den_factor) < 1e-8):
            raise PoleProximityError("node too close to a zero of 1 + phi^{-1} m_under")
        num = -n + 2.0 * z * (1.0 + z * m) * mu - q * (mu + z * mup)
        return f(z) * num / (z * den_factor)

    val = -contour_integrate(integrand, contour) / (2j * np.pi)
    if abs(np.imag(val)) > 1e-6 * (1 + abs(np.real(val))):
        raise ValueError(f"mean integral has imaginary part {np.imag(val):.3e}")
    return float(np.real(val))


def _formula_params(ratio: AspectRatio):
    """Contour parameters around the actual spectral bulk, regime per phi."""
    from .contour import Regime

    regime = Regime.AVOID_ORIGIN if ratio.phi < 1 else Regime.ENCLOSE_ORIGIN
    return default_params(_spectral_ratio(ratio), regime)


def kernel_dz2(z1, z2, ratio: AspectRatio):
    """Analytic z2-derivative of the covariance kernel

    K(z1, z2) = (z1 m(z1) - z2 m(z2))/(z1 - z2) + phi^{-1} z1 m(z1) m_under(z1) z2 m_under(z2).
    """
    z1 = np.asarray(z1, dtype=complex)
    z2 = np.asarray(z2, dtype=complex)
    if np.any(np.abs(z1 - z2) < 1e-6):
        raise CoincidenceError("z1 and z2 closer than 1e-6")
    m1, mu1, _, q = _pair(z1, ratio)
    m2, mu2, mup2, _ = _pair(z2, ratio)
    m2p = q * mup2 + (1.0 - q) / z2**2
    a1 = z1 * m1
    a2 = z2 * m2
    da2 = m2 + z2 * m2p
    part1 = (-da2 * (z1 - z2) + (a1 - a2)) / (z1 - z2) ** 2
    part2 = q * z1 * m1 * mu1 * (mu2 + z2 * mup2)
    return part1 + part2


def _variance_raw(f: TestFunction, ratio: AspectRatio, pair: tuple[Contour, Contour]) -> float:
    outer, inner = pair
    z1, w1 = outer.nodes()
    z2, w2 = inner.nodes()
    m1, mu1, _, q = _pair(z1, ratio)
    den = z1 * (1.0 + q * mu1)
    if np.any(np.abs(1.0 + q * mu1) < 1e-8):
        raise PoleProximityError("outer node too close to a zero of 1 + phi^{-1} m_under")
    kd = kernel_dz2(z1[:, None], z2[None, :], ratio)
    inner_vals = kd @ (f(z2) * w2)
    total = np.sum(f(z1) * inner_vals / den * w1) / (2 * np.pi**2)
    sigma2 = float(np.real(total))
    im_part = abs(np.imag(total))
    if im_part > 1e-6 * (1 + abs(sigma2)):
        raise ValueError(f"variance integral has imaginary part {im_part:.3e}")
    return sigma2


def variance_sigmaF(
    f: TestFunction,
    ratio: AspectRatio,
    pair: Optional[tuple[Contour, Contour]] = None,
    clamp_tol: float = 1e-8,
) -> float:
    """Double-contour evaluation of the asymptotic variance.

    sigma_f^2 = (1/2 pi^2) * double closed-integral of
                d/dz2 K(z1, z2) / (z1 (1 + phi^{-1} m_under(z1))) f(z1) f(z2).
    Small negative values produced by quadrature noise are clamped to 0.
    """
    if pair is None:
        pair = disjoint_pair(_spectral_ratio(ratio), _formula_params(ratio))
    sigma2 = _variance_raw(f, ratio, pair)
    if sigma2 < -clamp_tol:
        raise ValueError(f"variance integral negative beyond tolerance: {sigma2:.3e}")
    return max(sigma2, 0.0)


def schott_moments(n: int, p: int, beta2: float, beta4: float, beta11: float) -> tuple[float, float]:
    """Exact mean and asymptotic variance of tr R^2 from entry moments.

    mean = p + n p (p-1) beta2^2 + n (n-1) p (p-1) beta11^2
    variance = 2 n p^2 beta4^2 + 4 p^2 / n^2
    """
    if n < 2 or p < 2:
        raise ValueError("schott_moments needs n, p >= 2")
    mean = p + n * p * (p - 1) * beta2**2 + n * (n - 1) * p * (p - 1) * beta11**2
    variance = 2 * n * p**2 * beta4**2 + 4 * p**2 / n**2
    return mean, variance


# ---------------------------------------------------------------------------
# refined finite-size centering
# ---------------------------------------------------------------------------

_CHEB_NODES = 512


def mp_integral(f: TestFunction, q: float, nodes: int = _CHEB_NODES, include_atom: bool = True) -> float:
    """int f dMP_q: the bulk part, plus the (1 - 1/q)_+ atom at zero by default."""
    s, w = np.polynomial.chebyshev.chebgauss(nodes)
    xs = 1 + q + 2 * np.sqrt(q) * s
    bulk = (2 / np.pi) * float(np.sum(w * np.real(f(xs)) * (1 - s**2) / xs))
    if not include_atom:
        return bulk
    atom = max(0.0, 1.0 - 1.0 / q)
    return bulk + atom * float(np.real(f(0.0)))


def edge_mean_term(f: TestFunction, q: float, nodes: int = _CHEB_NODES) -> float:
    """[f(l-) + f(l+)]/4 - (1/2 pi) int_(bulk) f(x)/sqrt(4q - (x-1-q)^2) dx."""
    lm, lp = (1 - np.sqrt(q)) ** 2, (1 + np.sqrt(q)) ** 2
    s, w = np.polynomial.chebyshev.chebgauss(nodes)
    xs = 1 + q + 2 * np.sqrt(q) * s
    integral = float(np.sum(w * np.real(f(xs)))) / (2 * np.pi)
    return (float(np.real(f(lm))) + float(np.real(f(lp)))) / 4.0 - integral


def mean_refined(f: TestFunction, ratio: AspectRatio) -> float:
    """Finite-size centering for tr f(R), exact to o(1).

    p * int_bulk f dMP_q + (n - p)_+ f(0) - edge_mean_term(f, q) with q = p/n:
    the min(n, p) nonzero eigenvalues follow the MP(q) bulk, the (n - p)_+
    zeros contribute f(0) each, and the O(1) edge term enters with the sign
    opposite to the sample-covariance case (verified against the exact Schott
    moments and Monte Carlo).
    """
    n, p = _dims(ratio)
    q = p / n
    zero_block = max(0, n - p) * float(np.real(f(0.0)))
    bulk = p * mp_integral(f, q, include_atom=False)
    return bulk + zero_block - edge_mean_term(f, q)


def clt_target_for(
    f: TestFunction,
    ratio: AspectRatio,
    pair: Optional[tuple[Contour, Contour]] = None,
) -> CltTarget:
    """Full theory record: refined centering, contour variance, diagnostics."""
    if pair is None:
        pair = disjoint_pair(_spectral_ratio(ratio), _formula_params(ratio))
    a_contour = mean_aF(f, ratio, pair[0])
    a_ref = mean_refined(f, ratio)
    raw = _variance_raw(f, ratio, pair)
    if raw < -1e-8:
        raise ValueError(f"variance integral negative beyond tolerance: {raw:.3e}")
    diagnostics = {
        "a_f_contour": float(a_contour),
        "a_f_offset": float(a_ref - a_contour),
        "sigma2_raw": float(raw),
        "spectral_phi": float(_spectral_ratio(ratio).phi),
    }
    return CltTarget(
        a_f=a_ref,
        sigma2_f=max(raw, 0.0),
        f=f,
        ratio=ratio,
        diagnostics=diagnostics,
        variance_clamped=raw < 0.0,
    )
