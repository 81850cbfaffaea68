"""Harnack chains, attainable sets and kinetic Fokker-Planck solvers.

Submodules
----------
group            Galilean group law, dilations, boxes
controllability  Kalman rank, admissible curves, attainable sets
chain            Harnack chains and compact covers
solver           explicit finite differences for rough coefficients
oracles          closed-form kernel and Langevin sampling
verification     Harnack ratios, empirical constants, consequence checks
cli              command line interface
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .group import (  # noqa: F401
    BoxKind,
    BoxSpec,
    GroupPoint,
    HarnackConstants,
    box_corners,
    box_membership,
    compose,
    dilate,
    inverse,
    unit_box,
)
from .controllability import (  # noqa: F401
    AttainabilityStatus,
    ControlCurve,
    KolmogorovStructure,
    SearchBudget,
    attainable_membership,
    attainable_unit_box,
    control_energy,
    detect_block_structure,
    exp_tB,
    integrate_curve,
    kalman_rank,
    matrix_sqrt,
    minimal_energy_control,
    minimal_energy_curve,
)
from .chain import (  # noqa: F401
    HarnackChain,
    build_chain,
    calibrate_h,
    choose_delta0,
    cover_compact,
    default_constants,
    lemma22_step_box,
    min_reach_radius,
    reach_radius,
)
from .solver import (  # noqa: F401
    GridSpec,
    OperatorSpec,
    PiecewiseConstantField,
    SolutionField,
    evaluate,
    solve,
    sup_inf_on_box,
    weak_residual,
)
from .oracles import density_estimate, gamma_L0, langevin_mc  # noqa: F401
from .verification import (  # noqa: F401
    EnsembleSpec,
    empirical_M,
    geometric_harnack_check,
    harnack_ratio,
    pullback_operator,
    strong_max_principle_check,
)
