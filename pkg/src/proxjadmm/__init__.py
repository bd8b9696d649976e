"""Decentralized online optimization with proximal Jacobian ADMM over local copies."""

from .centralized import CentralizedSolution, solve_centralized
from .coordinator import (GapCertificate, IterationState, correction, gap_certificate, run_admm, select_params,
                          solve_decentralized)
from .local import NeighborSnapshot, ProxParams, local_mismatch, primal_update
from .online import ProblemSequence, continuity_report, interpolation_experiment, run_online
from .problem import (AgentSpec, BoxDomain, CoupledProblem, CouplingConstraint, LocalBlock, LocalConstraintView,
                      QuadraticObjective, build_local_view, eval_local_objective, eval_total_objective)
from .qp import QpInstance, QpSolution, solve_qp
from .smoothing import SmoothingConfig, smoothed_penalty, solve_smoothed

__version__ = "0.1.0"
