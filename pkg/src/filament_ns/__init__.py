"""Numerical laboratory for axisymmetric, swirl-free Navier-Stokes flows
whose initial vorticity is a positive combination of circular vortex
filaments (Dirac masses on the half-plane)."""

__version__ = "0.1.0"

from .errors import (InvalidParameter, ProbeRegimeBreach, SolverFailure,
                     StepRejected)
from .fields import (Filament, FilamentConfig, FrameField, FrameGrid, Grid,
                     ScalarField, VectorField, auto_grid, gaussian_vortex,
                     lp_norm, oseen_profile, weighted_l2)
from .biot_savart import (BsSolveReport, direct_quadrature_velocity,
                          interpolation_bound_check, solve_velocity,
                          stream_function)
from .dynamics import (SimulationState, SolverParams, advect_diffuse_mild,
                       evolve_to, initialize_filaments, linear_step, step)
from .selfsim import (EnergyReport, RescaledFrame, background_f0,
                      difference_energies, energies, oseen_distance, rescale)
from .config import RunConfig, FrameSettings, geometric_times, load_config, dump_config
from .harness import (ProbeResult, emit_report, run_asymptotics,
                      run_interaction_sweep, run_uniqueness_probe)
from .ledger import RunLedger

__all__ = [
    "__version__",
    "InvalidParameter", "ProbeRegimeBreach", "SolverFailure", "StepRejected",
    "Filament", "FilamentConfig", "FrameField", "FrameGrid", "Grid",
    "ScalarField", "VectorField", "auto_grid", "gaussian_vortex", "lp_norm",
    "oseen_profile", "weighted_l2",
    "BsSolveReport", "direct_quadrature_velocity", "interpolation_bound_check",
    "solve_velocity", "stream_function",
    "SimulationState", "SolverParams", "advect_diffuse_mild", "evolve_to",
    "initialize_filaments", "linear_step", "step",
    "EnergyReport", "RescaledFrame", "background_f0", "difference_energies",
    "energies", "oseen_distance", "rescale",
    "RunConfig", "FrameSettings", "geometric_times", "load_config", "dump_config",
    "ProbeResult", "emit_report", "run_asymptotics", "run_interaction_sweep",
    "run_uniqueness_probe",
    "RunLedger",
]
