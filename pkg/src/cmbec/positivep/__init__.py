"""Positive-P stochastic simulation of the measured lattice gas."""

from .backend import DEFAULT as DEFAULT_KERNEL, KERNELS, get_kernel
from .ensemble import (
    EnsembleAccumulator,
    EnsembleResult,
    SimConfig,
    advance_state,
    measurement_kick,
    run_ensemble,
    step,
)
from .model import (
    DivergenceError,
    TrajectoryState,
    diffusion_matrix,
    drift,
    init_coherent,
    interaction_noise_matrix,
    measurement_noise_column,
    noise_increment,
)

__all__ = [
    "DEFAULT_KERNEL",
    "KERNELS",
    "DivergenceError",
    "EnsembleAccumulator",
    "EnsembleResult",
    "SimConfig",
    "TrajectoryState",
    "advance_state",
    "diffusion_matrix",
    "drift",
    "get_kernel",
    "init_coherent",
    "interaction_noise_matrix",
    "measurement_noise_column",
    "noise_increment",
    "run_ensemble",
    "step",
    "measurement_kick",
]
