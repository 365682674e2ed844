"""Blind calibration of sensor gains in compressed sensing by iterative hard thresholding."""

from .geometry import GainFeasibleSet, hard_threshold, normalize_gains, project_gain_box, \
    project_zero_mean
from .sensing import Dimensions, ProblemInstance, SensingEnsemble, backproject_init, \
    draw_ensemble, draw_gains, draw_sparse_signal, loss, make_instance, synthesize
from .solver import EvalReport, SolverConfig, SolverResult, bc_iht_solve, evaluate, \
    iht_solve_uncalibrated
from .wavelet import WaveletBasis, analyze, sparsify_top_k, synthesize_coeffs

__version__ = "0.1.0"

__all__ = [
    "Dimensions", "ProblemInstance", "SensingEnsemble", "backproject_init", "draw_ensemble",
    "draw_gains", "draw_sparse_signal", "loss", "make_instance", "synthesize",
    "GainFeasibleSet", "hard_threshold", "normalize_gains", "project_gain_box",
    "project_zero_mean",
    "WaveletBasis", "analyze", "sparsify_top_k", "synthesize_coeffs",
    "EvalReport", "SolverConfig", "SolverResult", "bc_iht_solve", "evaluate",
    "iht_solve_uncalibrated",
]
