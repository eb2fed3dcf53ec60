"""Gradient-norm minimization by accumulative regularization.

Accelerated second- and first-order subroutines wrapped in epoch-restarted,
geometrically weighted power-prox regularization, with parameter-free and
uniformly convex variants and a harness that checks the convergence
inequalities at runtime.
"""

from .ar import (ARResult, EpochSchedule, ar_parameter_free, ar_run,
                 guess_and_check_D, oversolve_reference, schedule_cubic,
                 schedule_general)
from .cubic import (CubicModel, CubicStepResult, SecularNonConvergence,
                    SecularResult, cubic_step, secular_root)
from .errors import (AlgorithmAbort, DivergenceError, EpochCapExceeded,
                     HalvingFailure, LineSearchRunaway)
from .linalg import EigDecomp, ShiftTooSmallError, solve_shifted, sym_eig, symmetrize
from .problems import (DistanceUnavailable, KnownConstants, OracleCounter,
                       ProblemOracle, dist_to_opt, make_problem)
from .regularization import (PowerProxTerm, RegularizerStack, compose,
                             correction_norm_bound, derivative_lipschitz_addon,
                             prox_eval, recover_subgradient)
from .subroutines import (ContractReport, EstimatingState, FixedN, RunTrace,
                          SmallestK, SubroutineResult, TraceRow, acnm_run,
                          adaptive_run, agd_run, check_contract,
                          estimating_min, estimating_opt_value)
from .uniform import (RestartState, epoch_length_mk, epoch_length_real,
                      pf_uniform, restart_uniform)

__version__ = "0.1.0"
