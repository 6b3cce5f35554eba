"""Monte Carlo harnesses: CLT verification, convention calibration, the
alpha = 3 phase-transition sweep, local-law decay rates, quadratic-form
concentration, and the Gaussian-divisible spectrum match.

Determinism: replicate r of an experiment draws from a Philox stream keyed by
(master_seed, experiment tag, r), and aggregation is an ordered reduction by
replicate index, so reports are byte-identical for any worker count.
"""
from __future__ import annotations

import concurrent.futures as cf
import enum
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import kstest, norm

from . import free_conv, resampling
from .clt_target import TestFunction, clt_target_for
from .mp_law import AspectRatio, mp_stieltjes
from .spectra import (
    DensityReference,
    EigensolverError,
    MatrixKind,
    MpReference,
    esd_distance,
    spectral_data_for,
)
from .tail_sampler import (
    NormalLaw,
    TailLaw,
    critical_condition,
    moment_table,
    rng_for,
    self_normalize,
)

MAX_ENTRIES = 10_000_000

# stream tags keeping experiment seeds disjoint
_TAG_CLT = 101
_TAG_SWEEP = 102
_TAG_LOCAL = 103
_TAG_QUAD = 104
_TAG_GDM = 105
_TAG_CALIB = 106


class Convention(enum.Enum):
    AUTO = "Auto"
    PHI_N_OVER_P = "PhiEqualsNOverP"
    PHI_P_OVER_N = "PhiEqualsPOverN"


class DegenerateVarianceError(ValueError):
    pass


class CalibrationAmbiguityError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    n: int
    p: int
    law: object = field(default_factory=NormalLaw)  # TailLaw or NormalLaw
    f: TestFunction = field(default_factory=lambda: TestFunction.monomial(2))
    replicates: int = 200
    master_seed: int = 42
    convention: Convention = Convention.AUTO
    workers: int = 1
    mc_moment_columns: int = 20_000

    def __post_init__(self):
        if self.n * self.p > MAX_ENTRIES:
            raise ValueError(f"n*p = {self.n * self.p} exceeds the desk guardrail {MAX_ENTRIES}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def ratio(self) -> AspectRatio:
        return AspectRatio.from_dims(self.n, self.p)

    def resolved(self) -> dict:
        return {
            "n": self.n,
            "p": self.p,
            "law": self.law.describe(),
            "f": self.f.label,
            "replicates": self.replicates,
            "master_seed": self.master_seed,
            "convention": self.convention.value,
            "workers": self.workers,
            "mc_moment_columns": self.mc_moment_columns,
        }


def _run_replicates(count: int, worker, workers: int) -> list:
    """Ordered map of worker(r) over replicates; threads share BLAS kernels."""
    if workers <= 1:
        return [worker(r) for r in range(count)]
    with cf.ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, range(count)))


@dataclass
class CalibrationResult:
    convention: Convention
    ks_by_convention: dict
    spectral_ratio: AspectRatio

    def to_payload(self) -> dict:
        return {
            "convention": self.convention.value,
            "ks_by_convention": self.ks_by_convention,
            "spectral_phi": self.spectral_ratio.phi,
        }


def mp_fit_calibration(config: ExperimentConfig, pooled_replicates: int = 5) -> CalibrationResult:
    """Decide which MP parameterization fits the correlation spectrum.

    Pools a few PbyP spectra of light-tailed data and compares the empirical
    CDF against MP(n/p) and MP(p/n); the smaller KS wins. Heavy-tailed laws
    are replaced by the Gaussian reference for this check.
    """
    law = config.law if isinstance(config.law, NormalLaw) else NormalLaw()
    n, p = config.n, config.p
    eigs = []
    for r in range(pooled_replicates):
        X = law.sample((p, n), rng_for(config.master_seed, _TAG_CALIB, r))
        sd = spectral_data_for(self_normalize(X), MatrixKind.P_BY_P)
        eigs.append(sd.eigenvalues)
    pooled = np.sort(np.concatenate(eigs))[::-1]
    from .spectra import SpectralData

    sd_pool = SpectralData(eigenvalues=pooled, n=config.n, p=pooled.size, matrix_kind=MatrixKind.P_BY_P)
    candidates = {
        Convention.PHI_N_OVER_P: AspectRatio(phi=n / p, n=n, p=p),
        Convention.PHI_P_OVER_N: AspectRatio(phi=p / n, n=p, p=n),
    }
    ks = {
        conv: esd_distance(sd_pool, MpReference(ratio))
        for conv, ratio in candidates.items()
    }
    winner = min(ks, key=ks.get)
    if all(v > 0.2 for v in ks.values()):
        raise CalibrationAmbiguityError(f"no MP parameterization fits: {ks}")
    return CalibrationResult(
        convention=winner,
        ks_by_convention={c.value: float(v) for c, v in ks.items()},
        spectral_ratio=candidates[winner],
    )


def _formula_ratio(config: ExperimentConfig, convention: Convention) -> AspectRatio:
    """Trace-side ratio for the CLT formulas implied by the spectral winner.

    The MP parameter fitting the spectrum and the formulas' phi are companion
    duals: spectral parameter p/n pairs with formula phi = n/p and vice versa.
    """
    if convention is Convention.PHI_P_OVER_N:
        return AspectRatio.from_dims(config.n, config.p)
    return AspectRatio.from_dims(config.p, config.n)


def _resolve_convention(config: ExperimentConfig) -> Convention:
    if config.convention is not Convention.AUTO:
        return config.convention
    return mp_fit_calibration(config).convention


@dataclass
class CltReport:
    samples: np.ndarray
    a_f: float
    sigma2_f: float
    emp_mean: float
    emp_var: float
    ks_normal: float
    qq: np.ndarray  # (theory quantile, sample quantile) pairs
    convention_used: str
    skipped: int
    config: dict
    diagnostics: dict
    runtime: float  # seconds; never serialized

    def to_payload(self) -> dict:
        return {
            "experiment": "clt",
            "a_f": self.a_f,
            "sigma2_f": self.sigma2_f,
            "emp_mean": self.emp_mean,
            "emp_var": self.emp_var,
            "ks_normal": self.ks_normal,
            "convention_used": self.convention_used,
            "skipped": self.skipped,
            "samples": [float(x) for x in self.samples],
            "config": self.config,
            "diagnostics": self.diagnostics,
        }


def run_clt_experiment(config: ExperimentConfig) -> CltReport:
    """Standardized-LSS Monte Carlo against the theory (a_f, sigma_f).

    Standardization uses theory values only (no empirical centering). The LSS
    follows the dimension-side reading: the PbyP spectrum plus the exact
    zero-block contribution f(0) (n - p)_+.
    """
    if config.replicates < 100:
        raise ValueError("CLT runs need at least 100 replicates")
    t0 = time.time()
    convention = _resolve_convention(config)
    ratio = _formula_ratio(config, convention)
    target = clt_target_for(config.f, ratio)
    if target.sigma2_f <= 1e-8:
        raise DegenerateVarianceError(
            f"sigma_f^2 = {target.sigma2_f:.2e}: f = {config.f.label} is deterministic "
            "at this order (tr R = p for f = x); pick a nondegenerate test function"
        )
    n, p = ratio.n, ratio.p
    zero_block = max(0, n - p) * float(np.real(config.f(0.0)))

    def one(r: int) -> float:
        X = config.law.sample((p, n), rng_for(config.master_seed, _TAG_CLT, r))
        try:
            sd = spectral_data_for(self_normalize(X), MatrixKind.P_BY_P)
        except EigensolverError:
            return np.nan
        return float(np.sum(np.real(config.f(sd.eigenvalues)))) + zero_block

    raw = np.array(_run_replicates(config.replicates, one, config.workers))
    skipped = int(np.sum(~np.isfinite(raw)))
    if skipped > 0.01 * config.replicates:
        raise RuntimeError(f"{skipped} replicates failed (> 1%)")
    vals = raw[np.isfinite(raw)]
    samples = (vals - target.a_f) / np.sqrt(target.sigma2_f)
    ks = float(kstest(samples, "norm").statistic)
    order = np.sort(samples)
    qq = np.column_stack([norm.ppf((np.arange(order.size) + 0.5) / order.size), order])
    return CltReport(
        samples=samples,
        a_f=target.a_f,
        sigma2_f=target.sigma2_f,
        emp_mean=float(samples.mean()),
        emp_var=float(samples.var(ddof=1)),
        ks_normal=ks,
        qq=qq,
        convention_used=convention.value,
        skipped=skipped,
        config=config.resolved(),
        diagnostics=dict(target.diagnostics),
        runtime=time.time() - t0,
    )


# ---------------------------------------------------------------------------
# phase transition sweep (Schott statistic)
# ---------------------------------------------------------------------------

@dataclass
class SweepRow:
    alpha: float
    l_label: str
    n: int
    p: int
    emp_var: float
    universal: float
    excess: float
    excess_stderr: float
    ratio: float
    classification: str

    def as_tuple(self):
        return (
            self.alpha,
            self.l_label,
            self.n,
            self.p,
            self.emp_var,
            self.universal,
            self.excess,
            self.excess_stderr,
            self.ratio,
            self.classification,
        )


def phase_transition_sweep(
    alpha_grid: Sequence[float],
    l_choices: Sequence,
    n_grid: Sequence[int],
    config: ExperimentConfig,
) -> list[SweepRow]:
    """Var(tr R~^2) against the universal prediction across (alpha, l, n).

    tr R~^2 is computed as the squared Frobenius norm of Y*Y (no
    eigendecomposition); the excess term 2 n p^2 beta4^2 uses a Monte Carlo
    beta4 with a delta-method standard error.
    """
    rows: list[SweepRow] = []
    aspect = config.p / config.n
    stream = 0
    for alpha in alpha_grid:
        for sv in l_choices:
            law = TailLaw.build(alpha, slowly_varying=sv, symmetric=True)
            for n in n_grid:
                p = max(2, round(n * aspect))
                stream += 1

                def one(r: int, n=n, p=p, law=law, stream=stream) -> float:
                    X = law.sample((p, n), rng_for(config.master_seed, _TAG_SWEEP, stream, r))
                    Y = self_normalize(X).Y
                    Rt = Y.T @ Y
                    return float(np.einsum("ij,ij->", Rt, Rt))

                vals = np.array(_run_replicates(config.replicates, one, config.workers))
                table = moment_table(
                    law, n, mc_columns=config.mc_moment_columns, seed=config.master_seed + stream
                )
                b4, b4_se = table.beta["4"], table.stderr["4"]
                universal = 4.0 * p * p / n / n
                excess = 2.0 * n * p * p * b4 * b4
                excess_se = 4.0 * n * p * p * b4 * b4_se
                emp_var = float(vals.var(ddof=1))
                rows.append(
                    SweepRow(
                        alpha=alpha,
                        l_label=sv.describe(),
                        n=n,
                        p=p,
                        emp_var=emp_var,
                        universal=universal,
                        excess=excess,
                        excess_stderr=excess_se,
                        ratio=emp_var / universal,
                        classification=critical_condition(law).kind.value,
                    )
                )
    return rows


# ---------------------------------------------------------------------------
# local law decay
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiagnosticGrid:
    """Spectral probe points classified as bulk-like or outside the bulk."""

    points: tuple[tuple[complex, str], ...]

    @classmethod
    def default(cls, spectral_phi: float, n_min: int, delta: float = 0.1) -> "DiagnosticGrid":
        from .mp_law import mp_edges

        lm, lp = mp_edges(AspectRatio(phi=spectral_phi))
        bulk = complex((lm + lp) / 2, 0.5)
        outside = complex(lp + 0.5, 0.25)
        grid = cls(points=((bulk, "bulk"), (outside, "outside")))
        grid.validate(n_min, lm, lp, delta)
        return grid

    def validate(self, n: int, lm: float, lp: float, delta: float = 0.1):
        for z, kind in self.points:
            if kind == "bulk" and z.imag < n ** (-1 + delta):
                raise ValueError(f"bulk point {z} below the n^(-1+delta) scale")
            if kind == "outside" and min(abs(z.real - lm), abs(z.real - lp)) < 0.1 and lm <= z.real <= lp:
                raise ValueError(f"outside point {z} too close to the bulk")


@dataclass
class LocalLawRow:
    z: complex
    kind: str
    n: int
    avg_dev: float
    offdiag_max: float


def local_law_experiment(
    config: ExperimentConfig,
    grid: Optional[DiagnosticGrid] = None,
    n_grid: Sequence[int] = (200, 400, 800),
    replicates: int = 50,
) -> dict:
    """Median resolvent deviations across sizes with log-log slopes.

    For each probe z: |m_n(z) - m(z)| for the dimension-side transform, and
    the max off-diagonal |G_ij(z)| over <= 200 random index pairs.
    """
    if len(n_grid) < 3:
        raise ValueError("need at least three sizes for a slope")
    aspect = config.p / config.n
    if grid is None:
        grid = DiagnosticGrid.default(aspect, min(n_grid))
    rows: list[LocalLawRow] = []
    for n in n_grid:
        p = max(2, round(n * aspect))
        q = p / n
        dual = AspectRatio(phi=q, n=p, p=n)

        def one(r: int, n=n, p=p, q=q, dual=dual):
            rng = rng_for(config.master_seed, _TAG_LOCAL, n, r)
            X = config.law.sample((p, n), rng)
            Y = self_normalize(X).Y
            R = Y @ Y.T
            lam = np.linalg.eigvalsh(R)
            out = []
            for z, kind in grid.points:
                m_emp = np.mean(1.0 / (lam - z))
                sv = mp_stieltjes(z, dual)
                m_th = q * sv.m - (1 - q) / z
                G = np.linalg.inv(R - z * np.eye(n))
                ii = rng.integers(0, n, 200)
                jj = rng.integers(0, n, 200)
                mask = ii != jj
                off = float(np.max(np.abs(G[ii[mask], jj[mask]])))
                out.append((abs(m_emp - m_th), off))
            return out

        results = _run_replicates(replicates, one, config.workers)
        for k, (z, kind) in enumerate(grid.points):
            devs = np.median([res[k][0] for res in results])
            offd = np.median([res[k][1] for res in results])
            rows.append(LocalLawRow(z=z, kind=kind, n=n, avg_dev=float(devs), offdiag_max=float(offd)))
    slopes = {}
    for k, (z, kind) in enumerate(grid.points):
        sub = [r for r in rows if r.kind == kind and r.z == z]
        ns = np.log([r.n for r in sub])
        slopes[kind] = {
            "avg_dev_slope": float(np.polyfit(ns, np.log([r.avg_dev for r in sub]), 1)[0]),
            "offdiag_slope": float(np.polyfit(ns, np.log([r.offdiag_max for r in sub]), 1)[0]),
        }
    return {"rows": rows, "slopes": slopes}


# ---------------------------------------------------------------------------
# quadratic-form concentration
# ---------------------------------------------------------------------------

def _quad_matrix(kind: str, n: int, config: ExperimentConfig, z: float = 0.0) -> np.ndarray:
    if kind == "identity":
        return np.eye(n)
    if kind == "alternating":
        return np.diag(np.where(np.arange(n) % 2 == 0, 1.0, -1.0))
    if kind == "resolvent":
        # deterministic reference resolvent at real z outside the bulk
        p = max(2, round(n * config.p / config.n))
        X = NormalLaw().sample((p, n), rng_for(config.master_seed, _TAG_QUAD, 0))
        Y = self_normalize(X).Y
        R = Y @ Y.T
        lam_max = float(np.linalg.eigvalsh(R).max())
        zz = z if z else lam_max + 1.0
        return np.linalg.inv(R - zz * np.eye(n))
    raise ValueError(f"unknown quadratic-form kind {kind!r}")


def quadratic_concentration_experiment(
    config: ExperimentConfig, a_kind: str = "alternating", z: float = 0.0
) -> dict:
    """Monte Carlo E|Delta|^2 for Delta = Y_j* A Y_j - (1/n) tr A vs n beta4.

    Every column of every replicate contributes one Delta sample; the bound
    checked is the concentration rate n beta4_hat + n^{-1/2} with slack 5.
    """
    n, p = config.n, config.p
    A = _quad_matrix(a_kind, n, config)
    trA_over_n = float(np.trace(A)) / n

    def one(r: int) -> np.ndarray:
        X = config.law.sample((p, n), rng_for(config.master_seed, _TAG_QUAD, 1, r))
        Y = self_normalize(X).Y
        return np.einsum("ij,ij->j", Y, A @ Y) - trA_over_n

    deltas = np.concatenate(_run_replicates(config.replicates, one, config.workers))
    table = moment_table(config.law, n, mc_columns=config.mc_moment_columns, seed=config.master_seed)
    b4 = table.beta["4"]
    bound = 5.0 * (n * b4 + n**-0.5)
    e2 = float(np.mean(deltas**2))
    return {
        "a_kind": a_kind,
        "n": n,
        "max_abs_delta": float(np.max(np.abs(deltas))),
        "e_delta_sq": e2,
        "beta4_hat": float(b4),
        "bound": float(bound),
        "passed": bool(e2 <= bound),
        "samples": int(deltas.size),
    }


# ---------------------------------------------------------------------------
# Gaussian divisible model
# ---------------------------------------------------------------------------

@dataclass
class GdmReport:
    ks: float
    density_table: np.ndarray  # columns (E, rho_t)
    lambda_plus: float
    lambda_1: float
    xi_plus: float
    t: float
    base_ks: float
    config: dict
    runtime: float

    def to_payload(self) -> dict:
        return {
            "experiment": "gdm",
            "ks": self.ks,
            "lambda_plus": self.lambda_plus,
            "lambda_1": self.lambda_1,
            "xi_plus": self.xi_plus,
            "t": self.t,
            "base_ks": self.base_ks,
            "density_table": [[float(a), float(b)] for a, b in self.density_table],
            "config": self.config,
        }


def gdm_experiment(config: ExperimentConfig, t: float, density_points: int = 400) -> GdmReport:
    """Simulated GDM spectrum against the free-convolution density.

    Builds the heavy part H~ = M + H by the banded decomposition, forms
    Y_t = sqrt(t) W + H~ diag(S)^{-1/2} with fresh N(0, 1/n) noise, and
    compares the variables-side ESD of Y_t with rho_t (the comparison on the
    p x p side is the stricter one: the dimension-side CDFs differ from these
    by the common zero atom).
    """
    if not 0.01 < t < 0.5:
        raise ValueError("t must lie in (0.01, 0.5)")
    t0 = time.time()
    n, p = config.n, config.p
    law = config.law
    if not isinstance(law, TailLaw):
        raise ValueError("the GDM experiment needs a heavy-tailed law")
    rng = rng_for(config.master_seed, _TAG_GDM, 0)
    X = law.sample((p, n), rng)
    params = resampling.ControlParams.defaults(law.alpha)
    control = {
        "eps_l": params.eps_l,
        "eps_h": params.eps_h,
        "eps_s": params.eps_s,
        "eps_y": params.eps_y,
        "eps_mu": params.eps_mu,
        "beta_exp": params.beta_exp,
    }
    dec = resampling.decompose(X, params)
    rho = np.sqrt(np.einsum("ij,ij->i", X, X))
    B = (dec.M + dec.H) / rho[None, :]
    model = free_conv.GdmModel.from_base_matrix(t, B, config.ratio)
    W = rng.standard_normal((n, p)) / np.sqrt(n)
    Yt = np.sqrt(t) * W + B
    ev = np.sort(np.linalg.eigvalsh(Yt.T @ Yt))[::-1]
    ev = np.maximum(ev, 0.0)
    _, lam_plus, xi_plus = free_conv.gdm_edge(model)
    grid = np.linspace(1e-4, lam_plus + 0.3, density_points)
    rho_t = free_conv.gdm_density(model, grid)
    from .spectra import SpectralData

    sd = SpectralData(eigenvalues=ev, n=n, p=p, matrix_kind=MatrixKind.P_BY_P)
    ks = esd_distance(sd, DensityReference(grid=grid, density=rho_t, atom=0.0))
    base_ks = _two_sample_ks(ev, model.base_spectrum)
    resolved = dict(config.resolved())
    resolved["control_params"] = control
    return GdmReport(
        ks=float(ks),
        density_table=np.column_stack([grid, rho_t]),
        lambda_plus=float(lam_plus),
        lambda_1=float(ev.max()),
        xi_plus=float(xi_plus),
        t=t,
        base_ks=float(base_ks),
        config=resolved,
        runtime=time.time() - t0,
    )


def _two_sample_ks(a: np.ndarray, b: np.ndarray) -> float:
    xs = np.sort(np.concatenate([a, b]))
    fa = np.searchsorted(np.sort(a), xs, side="right") / a.size
    fb = np.searchsorted(np.sort(b), xs, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))
