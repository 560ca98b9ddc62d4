"""Robust log-utility portfolio choice with insider information: closed
forms, Monte-Carlo verification, backward-equation solvers and a
forward-integral laboratory."""

from .model import (
    InsiderKind,
    InsiderSpec,
    MarketParams,
    PiecewiseConstant,
    ScenarioConfig,
    ValidationError,
    DomainError,
    iota,
    phi_norm_sq,
    sigma_tilde,
    validate,
)
from .paths import PathBatch, TimeGrid, build_grid, sample_paths
from .strategies import StrategyKind, StrategyProfile, build_profile

__version__ = "0.1.0"
