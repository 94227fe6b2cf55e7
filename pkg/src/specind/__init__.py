"""Exact enumeration, Markov chains, couplings and Stein-type certificates for
spectral independence on small spin systems and list colourings."""

from .certify import Certificate, instance_digest
from .coupling import (
    CouplingSpec,
    JointKernel,
    NonConvergentCoupling,
    amortized_constant_exact,
    amortized_constant_mc,
    greedy_flip_coupling,
    greedy_glauber_coupling,
    independent_coupling,
    make_coupling,
    ricci_curvature_exact,
    variable_length_stats,
)
from .dynamics import (
    FlipParameters,
    RngStream,
    down_up_step,
    flip_step,
    glauber_step,
    kempe_component,
    run_chain,
)
from .exact import (
    ExactDistribution,
    TransitionMatrix,
    condition,
    dobrushin_matrix,
    down_up_kernel,
    enumerate_gibbs,
    flip_kernel,
    functional_report,
    glauber_kernel,
    influence_matrix,
    lambda_max,
    local_to_global_bound,
    mixing_time_exact,
    spectral_gap,
    spectral_independence,
    tv_distance,
)
from .instance import (
    CapExceeded,
    Graph,
    InfeasibleError,
    ListColoringInstance,
    SpinSystem,
    coloring,
    generate_graph,
    hardcore,
    ising,
    parse_graph_name,
    product_spins,
)
from .stein import (
    PoissonSolver,
    blackbox_certificate,
    exact_w1,
    kernel_difference,
    stein_bound,
    verify_thm_specind,
)
from .transport import wasserstein1

__version__ = "0.1.0"
