"""Simulation and analysis toolkit for a stochastic HBV infection model."""

__version__ = "0.1.0"

from .core import (
    FractionOutOfRange,
    IndivisibleGrid,
    InvalidParameters,
    ModelParams,
    NoiseParams,
    NonPositiveRate,
    RunSeed,
    SimGrid,
    StateVec,
    coarsen_increments,
    derive_stream,
    sample_wiener_increments,
    validate_params,
)
from .hbv import HbvConfig, equilibria, hbv_drift, hbv_system, x1_exact_mean, x1_system
from .sde import (
    NegativityPolicy,
    NonFiniteState,
    Scheme,
    SdeSystem,
    Trajectory,
    em_step,
    integrate,
    integrate_ode,
    milstein_step,
)
