"""Composite optimization: bundle and DC methods with stationarity certificates."""
from .approx import ApproximationFamily, Schedule, run_outer
from .bundle import BundleConfig, bundle_run, bundle_step
from .composite import CompositeProblem, DistanceStructure
from .dc import DcConfig, dc_run
from .errors import (CompOptError, ConfigurationError, InfeasiblePointError, InternalConsistencyError,
                     InvalidInputError, MasterFailure, RegistryError, UninitializedModelError)
from .problems import build_family, build_instance, list_instances
from .stationarity import StationarityTriple, residual

__version__ = "0.1.0"

__all__ = [
    "ApproximationFamily", "Schedule", "run_outer", "BundleConfig", "bundle_run", "bundle_step",
    "CompositeProblem", "DistanceStructure", "DcConfig", "dc_run", "CompOptError",
    "ConfigurationError", "InfeasiblePointError", "InternalConsistencyError", "InvalidInputError",
    "MasterFailure", "RegistryError", "UninitializedModelError", "build_family", "build_instance",
    "list_instances", "StationarityTriple", "residual",
]
