"""Quantum-trajectory autoregressive generative modelling of 1-D signals.

A D-dimensional complex latent state is conditioned on a signal one
sample at a time through a measurement-style affine update; training
maximizes the resulting path likelihood, and generation runs the same
recursion forward with temperature-scaled noise.  The package also ships
exact synthetic-process generators (delayed damped sines, Matern
spectral-mixture Gaussian processes, filtered Poisson shot noise) and
statistical verification of generated samples against their closed-form
covariances and third-order correlators.
"""

from .core import (
    Coupling,
    LatentState,
    ModelParameters,
    StateKind,
    evolve,
    evolve_density,
    evolve_pure,
    expectation,
    init_density,
    rotate_coupling,
    run_trajectory,
)
from .errors import (
    CmpsError,
    ConfigError,
    FormatError,
    GridMismatchError,
    InsufficientSamplesError,
    NonFiniteError,
    OutOfRangeError,
    QuadratureError,
    ZeroNormError,
)
from .signals import SignalSet, read_signalset, write_signalset

__version__ = "0.1.0"

__all__ = [
    "Coupling",
    "LatentState",
    "ModelParameters",
    "StateKind",
    "SignalSet",
    "evolve",
    "evolve_density",
    "evolve_pure",
    "expectation",
    "init_density",
    "read_signalset",
    "rotate_coupling",
    "run_trajectory",
    "write_signalset",
    "CmpsError",
    "ConfigError",
    "FormatError",
    "GridMismatchError",
    "InsufficientSamplesError",
    "NonFiniteError",
    "OutOfRangeError",
    "QuadratureError",
    "ZeroNormError",
]
