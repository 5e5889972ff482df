"""Chain recurrence, quasi-Lyapunov classes and equivariant Lyapunov potentials for torus flows."""

from .boxgraph import TransitionGraph, build_transition_graph, refine
from .cohomology import CohomologyClass
from .flowsys import VectorField, catalog_figure_one, circle_slow, linear, parse_flow
from .homcone import direction_cone, eulerian_reduce, max_ratio_cycle, sullivan_cone_support
from .lyapunov import lyapunov_potential, prescribed_pre_lyapunov, verify_potential
from .quasilyap import alpha_recurrent, is_quasi_lyapunov
from .recurrence import chain_decompose

__all__ = [
    "CohomologyClass", "TransitionGraph", "VectorField", "alpha_recurrent", "build_transition_graph",
    "catalog_figure_one", "chain_decompose", "circle_slow", "direction_cone", "eulerian_reduce",
    "is_quasi_lyapunov", "linear", "lyapunov_potential", "max_ratio_cycle", "parse_flow",
    "prescribed_pre_lyapunov", "refine", "sullivan_cone_support", "verify_potential",
]
__version__ = "0.1.0"
