"""Infinite-particle SDE simulation by frozen-environment re-solves (IFC)."""
from .analysis import (
    CylinderFunction,
    ito_residual,
    lyons_zheng_residual,
    qv_check,
    reverse_path,
    reversibility_test,
)
from .config import Configuration, LabeledState, MLabeledState, TameSchedule, default_schedule, label, split_m
from .diagnostics import CutoffParams, Theta, collision_monitor, cutoff_chi, kappa_exit, nbj_counter, upsilon
from . import errors
from .errors import *  # noqa: F401,F403
from .fields import bessel_kernel, estimate_correlation, h1_convergence_check, sine_kernel_rho, stationarity_test
from .ifc import FrozenEnvironment, HRegion, b1_report, consistency_error, freeze_env, solve_frozen, uniqueness_probe
from .integrator import BrownianPath, SolverConfig, Trajectory, coarsen, moment_bound_probe, simulate
from .models import InteractionSpec, Kind, drift, drift_jacobian
from .report import Report, report_merge
from .sampler import SamplerConfig, Window, sample_gibbs, sample_loggas, sample_poisson

__all__ = [
    "CylinderFunction",
    "ito_residual",
    "lyons_zheng_residual",
    "qv_check",
    "reverse_path",
    "reversibility_test",
    "Configuration",
    "LabeledState",
    "MLabeledState",
    "TameSchedule",
    "default_schedule",
    "label",
    "split_m",
    "CutoffParams",
    "Theta",
    "collision_monitor",
    "cutoff_chi",
    "kappa_exit",
    "nbj_counter",
    "upsilon",
    "bessel_kernel",
    "estimate_correlation",
    "h1_convergence_check",
    "sine_kernel_rho",
    "stationarity_test",
    "FrozenEnvironment",
    "HRegion",
    "b1_report",
    "consistency_error",
    "freeze_env",
    "solve_frozen",
    "uniqueness_probe",
    "BrownianPath",
    "SolverConfig",
    "Trajectory",
    "coarsen",
    "moment_bound_probe",
    "simulate",
    "InteractionSpec",
    "Kind",
    "drift",
    "drift_jacobian",
    "Report",
    "report_merge",
    "SamplerConfig",
    "Window",
    "sample_gibbs",
    "sample_loggas",
    "sample_poisson",
] + [n for n, v in vars(errors).items() if isinstance(v, type) and issubclass(v, Exception)]

__version__ = "0.1.0"
