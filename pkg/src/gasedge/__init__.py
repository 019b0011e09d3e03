"""gasedge: high-temperature 1D gas and tridiagonal random matrix laboratory.

Simulates log/Riesz gases in the N*beta -> 2P regime and their
tridiagonal matrix counterparts, solves the full-support equilibrium
density, and measures deviation probabilities and Poissonian edge
statistics against their predicted rates.
"""

from .errors import ConfigError, ContractViolation, ConvergenceError
from .model import (
    GasParameters,
    Interaction,
    ParticleConfiguration,
    PotentialSpec,
    configuration_energy,
    deviation_scale,
    interaction_eval,
    log_interaction,
    potential_eval,
    potential_grad,
    rate_function,
    riesz_interaction,
)
from .spectral import (
    BlockDecomposition,
    TridiagonalMatrix,
    block_decompose,
    dense_spectrum_oracle,
    lambda_max,
    periodic_shift_reduce,
    spectral_bounds,
    sturm_count,
    truncate,
)
from .sampling import (
    EntryDistribution,
    RngStream,
    build_dumitriu_edelman,
    build_generic,
    build_toda_lax,
    chi_density,
    chi_scaled_entries,
    custom_entries,
    iid_tail_exact,
    iid_tail_log,
    mcmc_gas,
    sample_chi,
    standard_gaussian_entries,
)
from .equilibrium import (
    DensityGrid,
    EquilibriumMeasure,
    GridSpec,
    askey_wimp_kerov_density,
    default_grid,
    free_energy,
    interaction_potential,
    interaction_potential_grid,
    solve_edge,
    solve_edge_closed_form,
    solve_equilibrium,
)
from .ensembles import (
    DiagonalGaussianEnsemble,
    GaussianBetaEnsemble,
    GenericTridiagonalEnsemble,
    IidGasEnsemble,
    McmcGasEnsemble,
)
from .experiments import (
    DeepTailEstimate,
    LDEstimate,
    LeftTailEstimate,
    ModerateEstimate,
    TailExponentEstimate,
    deep_right_tail,
    dmax_tail_scan,
    estimate_left_tail,
    estimate_moderate,
    estimate_right_tail,
    exp_equivalence_scan,
    marginal_bound_check,
    tail_exponent,
    wilson_interval,
)
from .edgestats import (
    EdgePointProcess,
    edge_process,
    edge_window_counts,
    no_exceedance_probability,
    poisson_count_test,
    window_mass,
)

__version__ = "0.1.0"
