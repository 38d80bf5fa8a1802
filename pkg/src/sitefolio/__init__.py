"""Portfolios of approximate solutions for subsidized facility placement."""

from .bruteforce import EnumLimits, check_subsidy_feasible, exact_fsfl, portfolio_necessity
from .fsfl import reduce_budgeted_to_fsfl, solve_fsfl
from .instances import gen_random, instance_from_doc, instance_to_doc, load_instance, save_instance
from .lp import SolverSettings
from .model import (
    Conic,
    FractionalSolution,
    Instance,
    Lp,
    Metric,
    Solution,
    TopL,
    evaluate_objective,
    group_distances,
    subsidy_of,
    theta_of,
    validate_instance,
)
from .portfolio import (
    ConicClassSpec,
    build_conic_mesh,
    build_conic_portfolio,
    build_fsfl_portfolio,
    build_interp_portfolio,
    snap_to_cell,
)
from .relaxation import InstanceInfeasibleError, build_relaxation, solve_relaxation

__version__ = "0.1.0"
