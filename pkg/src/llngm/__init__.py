"""Gibbs sampling, ergodicity diagnostics and likelihood estimation for linear
latent non-Gaussian models with generalized inverse Gaussian variance mixing."""

__version__ = "0.1.0"

from .bessel_gig import GigBranch, GigParams, bessel_k, gig_log_density, gig_moment, gig_sample, log_bessel_k
from .diagnostics import DiagSummary, iact, split_rhat, summarize_run
from .ergodicity import classify_regime, drift_constants, gamma_ns_scan, null_smallness, rosenthal_bound
from .estimation import SgdConfig, rb_score, score_centered, score_noncentered, sgd_fit
from .gaussian import PrecisionGaussian, conditional_M, conditional_W, sample_gaussian
from .gibbs import ChainState, GibbsConfig, gibbs_step, run_chain, run_chains
from .model import AR1Kernel, ModelSpec, Parameterization, build_ar1_operator, build_rank_deficient_A

__all__ = [
    "AR1Kernel", "ChainState", "DiagSummary", "GibbsConfig", "GigBranch", "GigParams", "ModelSpec",
    "Parameterization", "PrecisionGaussian", "SgdConfig", "bessel_k", "build_ar1_operator",
    "build_rank_deficient_A", "classify_regime", "conditional_M", "conditional_W", "drift_constants",
    "gamma_ns_scan", "gibbs_step", "gig_log_density", "gig_moment", "gig_sample", "iact", "log_bessel_k",
    "null_smallness", "rb_score", "rosenthal_bound", "run_chain", "run_chains", "sample_gaussian",
    "score_centered", "score_noncentered", "sgd_fit", "split_rhat", "summarize_run",
]
