from .config import McmcConfig, PriorConfig, RunConfig, get_config_dir, get_config_path
from .covariates import CovariateSet, load_covariates, monthly_to_daily
from .panel import ObservationPanel, load_panel, write_panel
from .store import PosteriorDraw, PosteriorStore

__all__ = [
    "McmcConfig",
    "PriorConfig",
    "RunConfig",
    "get_config_dir",
    "get_config_path",
    "CovariateSet",
    "load_covariates",
    "monthly_to_daily",
    "ObservationPanel",
    "load_panel",
    "write_panel",
    "PosteriorDraw",
    "PosteriorStore",
]
