"""corrlss: linear spectral statistics of sample correlation matrices.

Theory evaluators (Marchenko-Pastur transforms, CLT mean/variance contour
integrals, rectangular free convolution) plus heavy-tailed samplers and the
Monte Carlo experiments verifying the universal CLT and its breakdown at the
critical tail index.
"""
from .clt_target import CltTarget, TestFunction, clt_target_for, mean_aF, variance_sigmaF
from .contour import Contour, ContourParams, Regime, build_contour, contour_integrate, disjoint_pair
from .experiments import (
    Convention,
    ExperimentConfig,
    gdm_experiment,
    local_law_experiment,
    mp_fit_calibration,
    phase_transition_sweep,
    quadratic_concentration_experiment,
    run_clt_experiment,
)
from .free_conv import GdmModel, GdmPoint, gdm_density, gdm_edge, phi_t, solve_mt
from .mp_law import AspectRatio, StieltjesValue, mp_density, mp_edges, mp_stieltjes, mp_stieltjes_scaled
from .resampling import ControlParams, decompose, diag_decompose, diag_s_diagnostics, well_configured
from .spectra import (
    MatrixKind,
    SpectralData,
    correlation_matrix,
    eigenvalues,
    empirical_stieltjes,
    esd_distance,
    eta_regularity_check,
    green_entries,
    lss,
)
from .tail_sampler import (
    Const,
    LogPower,
    NormalLaw,
    SelfNormalized,
    TailLaw,
    asymptotic_even_moment,
    critical_condition,
    cumulant_expansion_residual,
    cumulants_from_moments,
    odd_moment_estimate,
    sample_matrix,
    self_normalize,
)

__version__ = "0.1.0"
