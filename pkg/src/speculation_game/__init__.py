"""Extended speculation game: agent-based price formation from round-trip trades."""

from .analysis import (
    AcfResult,
    HurstFit,
    TailStats,
    acf,
    aggregational_gaussianity_profile,
    average_sigma_across_trials,
    default_tau_grid,
    excess_kurtosis,
    fit_hurst,
    fit_power_law,
    return_histogram,
    returns,
    sigma_tau,
)
from .config import ConfigError, GameConfig
from .engine import SpeculationGame, run
from .series import PriceSeries

__version__ = "0.1.0"

__all__ = [
    "AcfResult",
    "ConfigError",
    "GameConfig",
    "HurstFit",
    "PriceSeries",
    "SpeculationGame",
    "TailStats",
    "acf",
    "aggregational_gaussianity_profile",
    "average_sigma_across_trials",
    "default_tau_grid",
    "excess_kurtosis",
    "fit_hurst",
    "fit_power_law",
    "return_histogram",
    "returns",
    "run",
    "sigma_tau",
]
