"""Mean-field steady states, fluctuation spectra and cavity-noise
depletion of a Bose-Einstein condensate in a driven lossy cavity."""

from .depletion import (
    DepletionResult,
    OracleSingularError,
    StabilityError,
    SteadyDepletion,
    depletion_at_times,
    depletion_sweep,
    finite_time_kernel,
    lyapunov_oracle,
    mode_projector,
    relaxation_time,
    solve_depletion_point,
    steady_state_depletion,
)
from .fluctuation import (
    FluctuationMatrix,
    build_matrix,
    gamma_transform,
    non_normality,
    save_matrix,
    symmetry_defect,
)
from .grid import Grid, integrate, kinetic_matrix, make_grid, potential_profile
from .meanfield import ConvergenceError, MeanFieldState, solve_ground_state, steady_alpha
from .params import ParameterError, SystemParams, validate
from .spectral import (
    DecompositionError,
    DegenerateClusterError,
    ModeDecomposition,
    StabilityReport,
    classify_stability,
    decompose,
    eigendecompose,
    petermann_factor,
    petermann_raw,
    reconstruction_defect,
    spectrum_sweep,
    solve_spectrum_point,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "DecompositionError",
    "DegenerateClusterError",
    "DepletionResult",
    "FluctuationMatrix",
    "Grid",
    "MeanFieldState",
    "ModeDecomposition",
    "OracleSingularError",
    "ParameterError",
    "StabilityError",
    "StabilityReport",
    "SteadyDepletion",
    "SystemParams",
    "build_matrix",
    "classify_stability",
    "decompose",
    "depletion_at_times",
    "depletion_sweep",
    "eigendecompose",
    "finite_time_kernel",
    "gamma_transform",
    "integrate",
    "kinetic_matrix",
    "lyapunov_oracle",
    "make_grid",
    "mode_projector",
    "non_normality",
    "petermann_factor",
    "petermann_raw",
    "potential_profile",
    "reconstruction_defect",
    "relaxation_time",
    "save_matrix",
    "solve_depletion_point",
    "solve_ground_state",
    "solve_spectrum_point",
    "spectrum_sweep",
    "steady_alpha",
    "steady_state_depletion",
    "symmetry_defect",
    "validate",
    "__version__",
]
