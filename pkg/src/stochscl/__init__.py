"""Vanishing-viscosity solver and Monte Carlo verification toolkit for 1-D
scalar conservation laws with multiplicative Brownian noise."""

from .calculus import (
    EntropyPair,
    TestFunction,
    build_entropy_pair,
    build_mollifiers,
    entropy_flux,
    product_test_function,
)
from .core import FluxModel, Grid1D, NoiseModel, WienerPath, build_grid, sample_wiener, validate_flux, validate_noise
from .errors import (
    A4Violation,
    AssumptionViolated,
    ConfigError,
    DerivativeMismatch,
    EnsembleMismatch,
    InvalidDomain,
    NumericalBlowup,
    PostShock,
    StabilityError,
    StochSCLError,
    SupportViolation,
    VGridOverflow,
)
from .solver import Ensemble, Trajectory, ViscousConfig, run_ensemble, solve, stable_dt
from .verify import VerificationReport

__version__ = "0.1.0"
