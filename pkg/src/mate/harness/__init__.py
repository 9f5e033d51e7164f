"""Simulation sweeps, real-data pipeline and figure data."""

from .config import ExperimentConfig, Setting, load_config, make_missingness
from .figures import edge_grid, emit_figures
from .models import PRESETS, get_preset
from .realdata import pc_impute, real_data_pipeline, rmse_rank_validation
from .simulate import SimulationReport, aggregate, run_simulation

__all__ = [
    "ExperimentConfig",
    "PRESETS",
    "Setting",
    "SimulationReport",
    "aggregate",
    "edge_grid",
    "emit_figures",
    "get_preset",
    "load_config",
    "make_missingness",
    "pc_impute",
    "real_data_pipeline",
    "rmse_rank_validation",
    "run_simulation",
]
