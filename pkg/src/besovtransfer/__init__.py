"""Transfer operators of piecewise expanding maps on Besov spaces over
dyadic grids: grids, Haar/atom representations, norms, a bestiary of maps,
Ulam discretization, spectral estimates and dynamical statistics."""

__version__ = "0.1.0"

from .grid import GridCell, Region, children, cover, locate
from .functions import (
    HaarCoeffs,
    PiecewiseConstantFn,
    SouzaAtom,
    atom_as_fn,
    haar_analysis,
    haar_synthesis,
    indicator,
    project,
)
from .besov import (
    BesovParams,
    RegularDomainCertificate,
    besov_norm_haar,
    besov_norm_osc,
    greedy_regular_decompose,
    holder_atom_bound,
    lorenz_atom_bound,
    pbv_atom_bound,
    verify_regular_domain,
)
from .maps import (
    MapSpec,
    besov_jacobian_family,
    linear_circle,
    lorenz_map,
    markov_holder,
    skew_product_step,
    tent,
    wild_family,
    winky_face,
)
from .transfer import (
    SparseOperator,
    apply,
    exact_atom_action,
    ulam_matrix,
    weighted_matrix,
)
from .spectral import (
    EssBound,
    LYFit,
    ess_bound,
    leading_eigen,
    ly_fit,
    markov_partition_sum,
    second_modulus,
)
from .stats import acim, correlations, support_report, wild_escape
from .normcmp import (
    butterley_upper,
    inclusion_suite,
    keller_var,
    liverani_lower,
)
