"""Online detection of mean changes in high-dimensional data streams."""

from .baselines import Mei, MixtureDetector, MixtureParams, WindowState, MeiState
from .core_stats import InputError, StatSnapshot, init_state, step_ocd
from .detector import OCD, Declaration, ThresholdSet, run_detector, theoretical_thresholds
from .grid import ConfigError, DetectorConfig, ScaleGrid, build_grid
from .ocd_prime import step_ocd_prime
from .preprocess import Standardizer, preprocess
from .simulate import ChangeSpec, effective_sparsity, generate_stream, sample_sparse_direction

__all__ = [
    "OCD", "Mei", "MixtureDetector", "MixtureParams", "MeiState", "WindowState",
    "DetectorConfig", "ScaleGrid", "build_grid", "ConfigError", "InputError",
    "StatSnapshot", "init_state", "step_ocd", "step_ocd_prime",
    "Declaration", "ThresholdSet", "run_detector", "theoretical_thresholds",
    "Standardizer", "preprocess",
    "ChangeSpec", "effective_sparsity", "generate_stream", "sample_sparse_direction",
]

__version__ = "0.1.0"
