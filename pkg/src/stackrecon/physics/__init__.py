from .stability import (FATAL, RECOVERABLE, STABLE, UNSTABLE, FullSolution, SimulationParams,
                        StabilityVerdict, check_stability, classify_recoverable, evaluate_solution,
                        filter_solutions)
