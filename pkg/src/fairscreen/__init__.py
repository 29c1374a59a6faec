"""Fairness-constrained sequential screening: evaluation, verification, solvers.

Public surface re-exported here; see the module docstrings for the math.
"""

from .eodds import EoddsBound, eodds_precision_bound, gap_instance, verify_eodds_structure
from .errors import (
    DegenerateInterval,
    FairScreenError,
    InvalidBounds,
    InvalidEps,
    InvalidParams,
    NotMinimallyEffective,
    ParseError,
    ShapeMismatch,
    SizeLimit,
    UnknownExample,
)
from .exact import solve_exact
from .fairness import FairnessReport, check_eo, check_eodds
from .fptas import Grid, solve_fptas_custom, solve_fptas_f, solve_fptas_g
from .groupblind import joint_stage_feasible, solve_groupblind
from .model import (
    Evaluation,
    Group,
    Pipeline,
    Policy,
    StagePolicy,
    TestStats,
    evaluate,
    stage_rates,
)
from .objectives import (
    CustomObjective,
    LinearObjective,
    PrecisionObjective,
    RecallObjective,
    ReciprocalObjective,
)
from .oracle import GridSpec, grid_search, monte_carlo, structured_grid_search
from .ratio import RatioPolicyKind, max_precision, opportunity_ratio, two_approx
from .reports import SolverReport

__all__ = [
    "CustomObjective",
    "DegenerateInterval",
    "EoddsBound",
    "Evaluation",
    "FairScreenError",
    "FairnessReport",
    "Grid",
    "GridSpec",
    "Group",
    "InvalidBounds",
    "InvalidEps",
    "InvalidParams",
    "LinearObjective",
    "NotMinimallyEffective",
    "ParseError",
    "Pipeline",
    "Policy",
    "PrecisionObjective",
    "RecallObjective",
    "ReciprocalObjective",
    "ShapeMismatch",
    "SizeLimit",
    "SolverReport",
    "StagePolicy",
    "TestStats",
    "UnknownExample",
    "check_eo",
    "check_eodds",
    "eodds_precision_bound",
    "evaluate",
    "gap_instance",
    "grid_search",
    "joint_stage_feasible",
    "max_precision",
    "monte_carlo",
    "opportunity_ratio",
    "solve_exact",
    "solve_fptas_custom",
    "solve_fptas_f",
    "solve_fptas_g",
    "solve_groupblind",
    "stage_rates",
    "structured_grid_search",
    "two_approx",
    "verify_eodds_structure",
]

__version__ = "0.1.0"
