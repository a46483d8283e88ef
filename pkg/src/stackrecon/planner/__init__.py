from .schedule import ONE_HAND, TWO_HAND, SymbolicPlan, assign_timestamps, canonical_form
from .search import MAX_LENGTH, SearchResult, enumerate_plans, min_length, plan_record, sort_plans
from .symbolic import (FIX, GRASP, PLACE, Domain, IllegalMove, Move, SymbolicState, apply_move,
                       domain_from_problem, legal_moves)
