"""Flexible primal-dual methods for consensus optimization over networks."""

from .core import (AlgorithmState, ConfigurationError, DivergenceError, RunTrace, StopRule,
                   Stepsizes, derived_matrices, kkt_residual, lyapunov, reference_solution, solve)
from .graph import Graph, Network, build_topology, incidence_matrix, make_network
from .objective import LogisticObjective, QuadraticObjective, parse_libsvm
from .stepsize import StepsizeCertificate, certify, certify_c, certify_f, certify_g, tuned_stepsize

__all__ = [
    "AlgorithmState", "ConfigurationError", "DivergenceError", "RunTrace", "StopRule",
    "Stepsizes", "derived_matrices", "kkt_residual", "lyapunov", "reference_solution", "solve",
    "Graph", "Network", "build_topology", "incidence_matrix", "make_network",
    "LogisticObjective", "QuadraticObjective", "parse_libsvm",
    "StepsizeCertificate", "certify", "certify_c", "certify_f", "certify_g", "tuned_stepsize",
]
