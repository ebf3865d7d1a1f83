"""Lifted tree-reweighted variational marginal inference.

Compute convex upper bounds on the log-partition function of symmetric,
templated Markov random fields by optimizing the tree-reweighted objective in
the compact orbit space, with optional tightening via cycle and exchangeable
cluster constraints.
"""

from .model import (ModelError, PairwiseGroundModel, TemplatedModel,
                    GroundModelBuilder, ground, parse_model)
from .symmetry import (LiftedGraph, TyingViolation, canonical_pattern,
                       compute_orbits, fix_node, trivial_lifting, verify_orbits)
from .polytope import (ConstraintSystem, CyclePool, NotExchangeable,
                       build_outer_system, detect_exchangeable_clusters,
                       exchangeable_constraints, lifted_local, separate_cycles,
                       OUTER_CHOICES)
from .lpsolve import (Basis, InfeasibleError, LinearProgram, Row, Simplex,
                      UnboundedError, solve)
from .trw import (TrwResult, entropy_coefficients, frank_wolfe, golden_section,
                  gradient, lifted_entropy_bound, lifted_linear_term,
                  uniform_edge_appearance)
from .spanning import (DisconnectedGraph, count_components, init_rho_uniform,
                       lifted_kruskal, lifted_mst_value, optimize_rho,
                       tree_edge_total)
from .oracle import (ExactResult, TooLarge, brute_force,
                     counting_elimination_complete, ground_kruskal, ground_trw,
                     random_exchangeable_moments, random_tree_point)
from . import zoo

__version__ = "0.1.0"

__all__ = [
    "ModelError", "PairwiseGroundModel", "TemplatedModel", "GroundModelBuilder",
    "ground", "parse_model",
    "LiftedGraph", "TyingViolation", "canonical_pattern", "compute_orbits",
    "fix_node", "trivial_lifting", "verify_orbits",
    "ConstraintSystem", "CyclePool", "NotExchangeable", "build_outer_system",
    "detect_exchangeable_clusters", "exchangeable_constraints", "lifted_local",
    "separate_cycles", "OUTER_CHOICES",
    "Basis", "InfeasibleError", "LinearProgram", "Row", "Simplex",
    "UnboundedError", "solve",
    "TrwResult", "entropy_coefficients", "frank_wolfe", "golden_section",
    "gradient", "lifted_entropy_bound", "lifted_linear_term",
    "uniform_edge_appearance",
    "DisconnectedGraph", "count_components", "init_rho_uniform",
    "lifted_kruskal", "lifted_mst_value", "optimize_rho", "tree_edge_total",
    "ExactResult", "TooLarge", "brute_force", "counting_elimination_complete",
    "ground_kruskal", "ground_trw", "random_exchangeable_moments",
    "random_tree_point",
    "zoo",
]
