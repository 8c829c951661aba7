"""Solvers for a driven two-level system coupled to a structured bath.

The package provides the exact non-Markovian master equation built from
the amplitude functions of the underlying model, Nakajima-Zwanzig and
time-convolutionless approximations, the Markovian limit, and an
independent discretized-bath oracle, together with a command line
interface that reproduces the reference data sets.
"""

from .errors import (
    AccuracyError,
    ConfigurationError,
    DomainError,
    QuadratureError,
    SolverError,
)
from .spectral import (
    FlatMemoryless,
    KernelMode,
    Lorentzian,
    SpinBoson,
    correlation_kernel,
    density_at,
)
from .kernel import (
    KernelSolution,
    TimeGrid,
    closed_form_u,
    solve_h,
    solve_u,
    solve_u1,
)
from .exact import (
    CoefficientTrack,
    build_coefficients,
    generator_stack,
    propagate_exact,
)
from .observables import (
    EvolutionTrace,
    PhysicalityReport,
    RegimeLabel,
    as_density,
    classify_regime,
    excited_state,
    fidelity,
    ground_state,
    physicality_scan,
    plus_state,
    positivity_witness,
    sigma_z,
    sigma_z_series,
)
from .perturbative import (
    DressedBasis,
    dressed_basis,
    propagate_markovian,
    propagate_nz,
    propagate_tcl_expanded,
    propagate_tcl_timelocal,
    tcl_coefficients,
)
from .oracle import (
    DiscretizedBath,
    discretize,
    propagate_full,
    undriven_analytic,
)
from .cli import (
    FIGURE_IDS,
    ScenarioConfig,
    figure_preset,
    load_config,
    reproduce_figure,
    run_scenario,
    run_validation,
)

__all__ = [
    "AccuracyError",
    "ConfigurationError",
    "DomainError",
    "QuadratureError",
    "SolverError",
    "FlatMemoryless",
    "KernelMode",
    "Lorentzian",
    "SpinBoson",
    "correlation_kernel",
    "density_at",
    "KernelSolution",
    "TimeGrid",
    "closed_form_u",
    "solve_h",
    "solve_u",
    "solve_u1",
    "CoefficientTrack",
    "build_coefficients",
    "generator_stack",
    "propagate_exact",
    "EvolutionTrace",
    "PhysicalityReport",
    "RegimeLabel",
    "as_density",
    "classify_regime",
    "excited_state",
    "fidelity",
    "ground_state",
    "physicality_scan",
    "plus_state",
    "positivity_witness",
    "sigma_z",
    "sigma_z_series",
    "DressedBasis",
    "dressed_basis",
    "propagate_markovian",
    "propagate_nz",
    "propagate_tcl_expanded",
    "propagate_tcl_timelocal",
    "tcl_coefficients",
    "DiscretizedBath",
    "discretize",
    "propagate_full",
    "undriven_analytic",
    "FIGURE_IDS",
    "ScenarioConfig",
    "figure_preset",
    "load_config",
    "reproduce_figure",
    "run_scenario",
    "run_validation",
]

__version__ = "0.1.0"
