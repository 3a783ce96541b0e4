"""Additive shape invariant mixture model for recurrent-event data."""

__version__ = "0.1.0"

from .centering import centering_step
from .clustering import clustering_step, optimize_shifts
from .driver import FitResult, check_design, fit, gamma_reference, refine_k, select_gamma, select_k_preliminary
from .events import Dataset, EventTimes, SpectralData, build_spectral, empirical_fourier, load_dataset
from .metrics import ari, mise, mise_fit, shift_aligned_distance
from .model import FitConfig, ModelParams, NewtonConfig
from .simgen import GroundTruth, scenario1, scenario2
from .spectral import SpectralCurve, synthesize

__all__ = [
    "__version__", "centering_step", "clustering_step", "optimize_shifts", "FitResult",
    "check_design", "fit", "gamma_reference", "refine_k", "select_gamma",
    "select_k_preliminary", "Dataset", "EventTimes", "SpectralData", "build_spectral",
    "empirical_fourier", "load_dataset", "ari", "mise", "mise_fit", "shift_aligned_distance",
    "FitConfig", "ModelParams", "NewtonConfig", "GroundTruth", "scenario1", "scenario2",
    "SpectralCurve", "synthesize",
]
