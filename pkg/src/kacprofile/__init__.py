"""Variational, kernel and Monte-Carlo tools for the fuzzy Kac-Potts model on the torus."""

__version__ = "0.1.0"

from ._accel import backend, set_backend, use_backend
from .errors import ConfigurationError, ContractError, DomainError, KacProfileError, NonConvergenceError
from .expr import ExpressionError, parse_expression
from .kernels import (
    GibbsVerdict,
    KernelVector,
    NonGibbsWarning,
    a_functional,
    classify_gibbs,
    d_factor,
    ising_weight_closed_form,
    ising_weight_two_point,
    limiting_kernel,
    weight_jump_scan,
)
from .meanfield import (
    binary_entropy,
    cw_fixed_point,
    homogeneous_potts_minimizers,
    local_potential,
    potts_beta_c,
    relative_entropy,
)
from .simulator import (
    ColorProfile,
    FuzzyPartition,
    McOptions,
    SpinConfiguration,
    Volume,
    bin_integrals,
    diluted_volume,
    empirical_profile,
    estimate_kernel,
    fuzzy_project,
    hamiltonian_energy,
    heat_bath_sweep,
    pair_distance,
    sample_profiles,
    volume_from_density,
)
from .torus import (
    DensityProfile,
    GridField,
    InteractionKernel,
    TorusGrid,
    convolve,
    integrate,
    make_grid,
    make_kernel,
    normalize_density,
)
from .variational import (
    MinimizerSet,
    SolverOptions,
    directional_derivative,
    find_minimizers,
    flat_profile_mflat,
    local_profile_mloc,
    local_temperature,
    rate_functional,
    rate_functional_split,
    solve_stationary,
    stationarity_residual,
)

__all__ = [name for name in dir() if not name.startswith("_")]
