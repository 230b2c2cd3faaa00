"""Hybrid mass-diffusion / heat-conduction recommendation on bipartite graphs."""

from .algorithms import REFERENCE_COEFFS, AlgorithmSpec, Kind
from .calibrate import calibrate_dcb, generate_power_law_bipartite, verify_scaling_exponent
from .diffusion import Propagator, recommend_all, score_user, transfer_matrix
from .fitting import fit_double_exponential
from .graph import BipartiteGraph, build_graph
from .metrics import (improvement, inner_diversity, inter_diversity, precision,
                      ranking_score, recommended_degree_distribution)

__version__ = "0.1.0"
