"""Ground states of two-population ergodic mean-field games.

Computes constrained energy minimizers over density/flux pairs on truncated
grids, the potential-free reference problem and its sharp constant, dual
value-function reconstruction, existence classification, and near-critical
blow-up sweeps with rate fits.
"""

__version__ = "0.1.0"

from .constraints import (
    ConstraintOperator,
    FeasiblePair,
    clip_nonnegative,
    fp_residual,
    project,
    random_feasible,
)
from .dual import (
    DecayFit,
    HJBConfig,
    decay_fit,
    grad_u_from_flux,
    hjb_residual,
    lambda_formula,
    recover_w_from_u,
    solve_ergodic_hjb,
)
from .energy import (
    CouplingParams,
    EnergyBreakdown,
    HamiltonianParams,
    MFGParams,
    PotentialSpec,
    Thresholds,
    Well,
    gn_quotient,
    kinetic_cost,
    thresholds,
    total_energy,
)
from .errors import MFGError
from .fields import DensityField, FluxField, GridSpec, ScalarField
from .reference import (
    MomentResult,
    ReferenceConfig,
    ReferenceSolution,
    minimize_moment,
    moment_functional,
    pohozaev_residuals,
    rescale_reference,
    solve_reference,
)
from .solve import (
    ExistenceVerdict,
    MinimizerResult,
    SolverConfig,
    Verdict,
    classify_existence,
    continuation_solve,
    descend,
    fictitious_play,
    fit_ray_coefficient,
    initial_state,
    ray_energy,
)
from .sweeps import (
    BlowupRecord,
    FlattestSelection,
    RateFit,
    attractive_delta_schedule,
    attractive_sweep,
    energy_upper_bound_check,
    fit_rate,
    phase_diagram,
    predicted_eps_attractive,
    predicted_eps_repulsive,
    repulsive_sweep,
    rescale_blowup,
    select_flattest,
)
