"""Influence diagrams compiled to mixed-integer linear programs."""

from .diagram import (
    DecisionStrategy,
    DiagramError,
    InfluenceDiagram,
    Node,
    ValidationReport,
    load_diagram,
    observation_set,
    save_diagram,
    strategy_space_size,
    topological_order,
    validate_diagram,
)
from .evaluate import cvar_of_distribution, expected_utility_of_strategy, utility_distribution_of_strategy
from .formulations import (
    ChanceConstraintSpec,
    add_chance_constraint,
    build_cvar_model,
    build_dp_model,
    build_dpr_model,
    gamma_bound,
)
from .results import SolveResult
from .solve import solve

__version__ = "0.1.0"
