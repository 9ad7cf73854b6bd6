"""Numerical laboratory for the 1D discrete alloy-type Anderson model."""

__version__ = "0.1.0"

from .averaging import (
    AlphaVector,
    ConstantsReport,
    DBounds,
    D_bounds,
    alpha_star_search,
    det_fractional_average,
    find_weak_disorder_R,
    fmm_constants,
    multiparam_det_average,
    resolvent_norm_average_check,
)
from .errors import FmmLabError
from .fmm_mc import (
    DecayFit,
    MomentEstimate,
    apriori_sweep,
    conditional_moment_check,
    decay_profile,
    estimate_moment,
    general_support_decay,
    merge_moment_estimates,
)
from .greens import (
    ComplexEnergy,
    DepletedPair,
    corner_determinant_check,
    depleted_split,
    geometric_resolvent_residual,
    green_block,
    green_column,
    green_entry,
    schur_block,
)
from .localization import (
    EigenSystem,
    RegularityVerdict,
    eigenfunction_decay_stats,
    eigensolve_box,
    regularity_check,
    two_box_regularity_probability,
    wegner_statistic,
)
from .model import (
    BoxHamiltonian,
    CouplingField,
    DisorderDensity,
    SingleSitePotential,
    alloy_potential,
    assemble_box_hamiltonian,
    build_single_site,
    sample_couplings,
)
from .monotone import (
    PositivityWitness,
    SearchVerdict,
    monotone_moment_bound_check,
    nonneg_root_test,
    positive_combination_search,
    two_param_averaging_check,
)
