"""Finite Markov semigroups, Gamma-calculus curvature, pointwise orders on
families of semigroups and their ergodic limits."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .semigroup import (  # noqa: F401
    CheckReport,
    Functional,
    GeneratorMatrix,
    ProbabilityMeasure,
    StateSpace,
    TransitionMatrix,
    apply,
    check_invariance,
    check_reversibility,
    check_semigroup_axioms,
    generator_from_semigroup,
    invariant_measure,
    transition_matrix,
    validate_generator,
)
from .gamma import cd_check, curvature, dirichlet_form, gamma, gamma2  # noqa: F401
from .poset import (  # noqa: F401
    ImpreciseFamily,
    OrderReport,
    brute_force_width,
    compare,
    directedness_check,
    export_hasse,
    imsg_certify,
    lower_upper_prevision,
    order_report,
)
from .ergodicity import (  # noqa: F401
    check_ergodic_limit,
    check_gradient_bound,
    check_local_poincare,
    check_poincare,
    check_sandwich,
    spectral_gap,
    variance,
)
