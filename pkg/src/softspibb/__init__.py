"""Safe policy improvement with soft baseline bootstrapping, for tabular MDPs."""
from .competitors import basic_rl, pi_b_spibb, pi_leq_b_spibb, ramdp
from .error_bounds import (BoundReport, ErrorTable, bound_report, estimate_kappa,
                           hoeffding_error, inverse_sqrt_error, spibb_equivalent_error)
from .mdp import (Dataset, Mdp, MdpShape, Transition, count_pairs, discounted_visit_matrix,
                  estimate_mle, fitted_q_update, policy_evaluation_q, policy_value,
                  solve_optimal)
from .simplex import LinearProgram, LpSolution, solve_lp
from .soft_spibb import (ImprovementResult, SoftSpibbConfig, approx_improvement_state,
                         exact_improvement_state, measure_improvement_complexity,
                         run_policy_iteration)

__version__ = "0.1.0"

__all__ = [
    "basic_rl", "pi_b_spibb", "pi_leq_b_spibb", "ramdp",
    "BoundReport", "ErrorTable", "bound_report", "estimate_kappa", "hoeffding_error",
    "inverse_sqrt_error", "spibb_equivalent_error",
    "Dataset", "Mdp", "MdpShape", "Transition", "count_pairs", "discounted_visit_matrix",
    "estimate_mle", "fitted_q_update", "policy_evaluation_q", "policy_value", "solve_optimal",
    "LinearProgram", "LpSolution", "solve_lp",
    "ImprovementResult", "SoftSpibbConfig", "approx_improvement_state",
    "exact_improvement_state", "measure_improvement_complexity", "run_policy_iteration",
]
