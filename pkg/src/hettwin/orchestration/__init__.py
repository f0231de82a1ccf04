"""Target-area orchestration: twins, predicted awards, assignment and cost accounting."""

from .assignment import AssignmentSolution, assign_with_capacity, balance_and_assign, hungarian
from .awards import AwardMatrix, link_rates, power_grid, predict_awards
from .ledger import CostLedger, CostModel, all_inclusive_ledger, efficiency, hierarchical_ledger
from .pipeline import (VARIANTS, RoundContext, RoundReport, Situation, evaluate_situation, prepare_round, run_point,
                       run_round, run_variant)
from .twins import TwinRegistry, vpd_compensate

__all__ = [
    "AssignmentSolution", "AwardMatrix", "CostLedger", "CostModel", "RoundContext", "RoundReport", "Situation",
    "TwinRegistry", "VARIANTS", "all_inclusive_ledger", "assign_with_capacity", "balance_and_assign", "efficiency",
    "evaluate_situation", "hierarchical_ledger", "hungarian", "link_rates", "power_grid", "predict_awards",
    "prepare_round", "run_point", "run_round", "run_variant", "vpd_compensate",
]
