"""Inner-approximation (successive convex approximation) machinery."""

from .canonical import (BUILDERS, SubproblemCanonical, anchors_at, build_ccjt_mmse_subproblem,
                        build_ccjt_zf_subproblem, build_dcst_subproblem, time_coefficient)
from .loop import (CONVERGED, INFEASIBLE, MAX_ITERS, NUMERICAL_FAILURE, ScaInfeasible,
                   ScaOptions, SolveResult, initial_powers, restore_feasibility, run_sca)
from .solver import (SUBSOLVERS, SubproblemInfeasible, SubproblemNumericalFailure,
                     SubproblemSolution, kernel_backend, solve_convex_subproblem)

__all__ = [
    "BUILDERS", "SubproblemCanonical", "anchors_at", "build_ccjt_mmse_subproblem",
    "build_ccjt_zf_subproblem", "build_dcst_subproblem", "time_coefficient",
    "CONVERGED", "INFEASIBLE", "MAX_ITERS", "NUMERICAL_FAILURE", "ScaInfeasible",
    "ScaOptions", "SolveResult", "initial_powers", "restore_feasibility", "run_sca",
    "SUBSOLVERS", "SubproblemInfeasible", "SubproblemNumericalFailure",
    "SubproblemSolution", "kernel_backend", "solve_convex_subproblem",
]
