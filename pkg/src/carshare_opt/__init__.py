"""Joint drop-off pricing and vehicle relocation for one-way carsharing.

The package solves a two-stage stochastic program: vehicles are placed and
origin-destination fees chosen before customer preferences are known, and
rentals follow from the realised preferences. The main entry points are
:class:`LShapedSolver` (exact branch-and-cut) and :class:`ILSSolver`
(heuristic), both with a scikit-learn style ``fit``/``score`` interface.
"""
__version__ = "0.1.0"

from .choice import RequestPreprocessor, compute_requests, simulate_choices  # noqa: E402
from .domain import FirstStageSolution, Instance, Scenario, SolveReport  # noqa: E402
from .generator import GenConfig, generate, generate_instance, sample_scenarios  # noqa: E402
from .ils import ILSSolver  # noqa: E402
from .lshaped import LShapedSolver, evaluate_first_stage, gap_percent  # noqa: E402

__all__ = [
    "FirstStageSolution", "GenConfig", "ILSSolver", "Instance", "LShapedSolver", "RequestPreprocessor",
    "Scenario", "SolveReport", "compute_requests", "evaluate_first_stage", "gap_percent", "generate",
    "generate_instance", "sample_scenarios", "simulate_choices",
]
