"""Distributed aggregative optimization by gradient tracking, with heavy-ball
(DAGT-HB) and Nesterov (DAGT-NES) momentum."""

from .analysis import (ConservativeBounds, ConvergenceMatrix, JuryVerdict, Quartic, RateFit,
                       StabilityReport, build_matrix, char_quartic, check_lyapunov, closed_form_quartic,
                       conservative_bounds, estimate_rate, jury_stable, region_member, spectral_radius,
                       sweep)
from .config import ConfigError, ExperimentConfig, load_experiment, load_instance
from .engine import (DivergenceError, NetworkState, SolverConfig, Trace, Variant, init_network, run,
                     step)
from .graph import (CommGraph, DisconnectedGraphError, GraphError, MixingMatrix, contraction_factor,
                    make_graph, metropolis_weights, read_edge_list, validate_mixing, write_edge_list)
from .oracle import OracleSolution, solve, solve_centralized, verify_fixed_point
from .problem import (ProblemSpec, SmoothnessConstants, canonical_instance, derive_constants,
                      global_grad, placement_instance)

__all__ = [
    "CommGraph", "ConfigError", "ConservativeBounds", "ConvergenceMatrix", "DisconnectedGraphError",
    "DivergenceError", "ExperimentConfig", "GraphError", "JuryVerdict", "MixingMatrix", "NetworkState",
    "OracleSolution", "ProblemSpec", "Quartic", "RateFit", "SmoothnessConstants", "SolverConfig",
    "StabilityReport", "Trace", "Variant", "build_matrix", "canonical_instance", "char_quartic",
    "check_lyapunov", "closed_form_quartic", "conservative_bounds", "contraction_factor",
    "derive_constants", "estimate_rate", "global_grad", "init_network", "jury_stable", "load_experiment",
    "load_instance", "make_graph", "metropolis_weights", "placement_instance", "read_edge_list",
    "region_member", "run", "solve", "solve_centralized", "spectral_radius", "step", "sweep",
    "validate_mixing", "verify_fixed_point", "write_edge_list",
]
