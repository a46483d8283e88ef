"""Solution scores and the one-hand choice probability for four model variants."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .physics.stability import RECOVERABLE, FullSolution
from .planner.schedule import ONE_HAND, SymbolicPlan
from .planner.search import enumerate_plans
from .scene import Problem

MULTI_BLOCK_SURCHARGE = 0.5
RECOVERY_SURCHARGE = 0.5


@dataclass(frozen=True)
class SolutionScore:
    problem: int
    solution: int
    s: int
    f: float
    handedness: str

    def __post_init__(self):
        extra = self.f - self.s
        if extra < 0 or abs(2 * extra - round(2 * extra)) > 1e-9:
            raise ValueError(f"f - s must be a non-negative multiple of 0.5, got {extra}")


@dataclass(frozen=True)
class ModelVariant:
    source: str           # "symbolic" | "full"
    solution_set: str     # "efficient" | "inefficient"

    def __post_init__(self):
        if self.source not in ("symbolic", "full"):
            raise ValueError(f"unknown score source {self.source!r}")
        if self.solution_set not in ("efficient", "inefficient"):
            raise ValueError(f"unknown solution set {self.solution_set!r}")

    @property
    def name(self) -> str:
        return f"{self.source}-{self.solution_set}"

    @property
    def mode(self) -> str:
        """Planner mode generating this variant's solution set."""
        return "efficient" if self.solution_set == "efficient" else "universal"

    @classmethod
    def parse(cls, name: str) -> "ModelVariant":
        parts = name.split("-")
        if len(parts) != 2:
            raise ValueError(f"unknown variant {name!r}")
        return cls(*parts)


VARIANTS = tuple(ModelVariant(src, sol) for src in ("symbolic", "full") for sol in ("efficient", "inefficient"))


@dataclass(frozen=True)
class Prediction:
    problem: int
    variant: str
    pr_one_hand: Optional[float]     # None: the problem has no solutions under this variant
    n_one_hand: int
    n_all: int

    @property
    def defined(self) -> bool:
        return self.pr_one_hand is not None

    def row(self) -> Dict[str, object]:
        return {"problem_id": self.problem, "variant": self.variant,
                "pr_one_hand": "" if self.pr_one_hand is None else repr(float(self.pr_one_hand)),
                "n_one_hand": self.n_one_hand, "n_all": self.n_all}


def metabolic_cost(plan: SymbolicPlan, recoverable: int = 0) -> float:
    """s plus a half point per move of a block carrying others and per recoverable instability."""
    carrying = sum(1 for c in plan.carried if c > 0)
    return plan.s + MULTI_BLOCK_SURCHARGE * carrying + RECOVERY_SURCHARGE * recoverable


def solution_cost(sol: FullSolution) -> float:
    return metabolic_cost(sol.plan, sum(v.label == RECOVERABLE for v in sol.verdicts))


def pr_one_hand(scores: Sequence[SolutionScore], variant: ModelVariant, temperature: float = 1.0,
                problem: Optional[int] = None) -> Prediction:
    """Share of exp(-score / temperature) mass on one-hand solutions.

    Scores are shifted by their minimum before exponentiation.  Symbolic
    variants use s, full variants use f.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    pid = problem if problem is not None else (scores[0].problem if scores else -1)
    if not scores:
        return Prediction(pid, variant.name, None, 0, 0)
    vals = np.array([sc.f if variant.source == "full" else sc.s for sc in scores], float)
    one = np.array([sc.handedness == ONE_HAND for sc in scores])
    w = np.exp(-(vals - vals.min()) / temperature)
    pr = float(w[one].sum() / w.sum())
    return Prediction(pid, variant.name, min(1.0, max(0.0, pr)), int(one.sum()), len(scores))


def symbolic_scores(problem_id: int, plans: Iterable[SymbolicPlan]) -> List[SolutionScore]:
    return [SolutionScore(problem_id, j, p.s, float(p.s), p.handedness) for j, p in enumerate(plans)]


def full_scores(problem_id: int, solutions: Iterable[FullSolution]) -> List[SolutionScore]:
    """Scores of accepted solutions only; the index is the position among all solutions."""
    out = []
    for j, sol in enumerate(solutions):
        if sol.accepted:
            out.append(SolutionScore(problem_id, j, sol.plan.s, solution_cost(sol), sol.plan.handedness))
    return out


class ProblemRunner:
    """Enumerates and evaluates each solution set of one problem once."""

    def __init__(self, problem: Problem, pipeline=None, cap: int = 12, search: str = "exhaustive",
                 budget: int = 20000, seed: int = 0):
        if pipeline is None:
            from .pipeline import ProblemPipeline
            pipeline = ProblemPipeline(problem)
        self.problem = problem
        self.pipeline = pipeline
        self.cap, self.search, self.budget, self.seed = cap, search, budget, seed
        self._plans: Dict[str, List[SymbolicPlan]] = {}
        self._full: Dict[str, List[FullSolution]] = {}

    def plans(self, mode: str) -> List[SymbolicPlan]:
        if mode not in self._plans:
            res = enumerate_plans(self.problem, mode, "both", self.search, self.budget, self.cap, self.seed)
            self._plans[mode] = res.plans
        return self._plans[mode]

    def solutions(self, mode: str) -> List[FullSolution]:
        if mode not in self._full:
            self._full[mode] = self.pipeline.evaluate_all(self.plans(mode))
        return self._full[mode]

    def scores(self, variant: ModelVariant) -> List[SolutionScore]:
        if variant.source == "symbolic":
            return symbolic_scores(self.problem.id, self.plans(variant.mode))
        return full_scores(self.problem.id, self.solutions(variant.mode))

    def predict(self, variant: ModelVariant, temperature: float = 1.0) -> Prediction:
        return pr_one_hand(self.scores(variant), variant, temperature, self.problem.id)


def run_variant(problems: Sequence[Problem], variant: ModelVariant, runners: Optional[Dict[int, ProblemRunner]] = None,
                temperature: float = 1.0) -> List[Prediction]:
    """One prediction per problem.  Pass shared ``runners`` to reuse work across variants."""
    runners = runners if runners is not None else {}
    out = []
    for p in problems:
        if p.id not in runners:
            runners[p.id] = ProblemRunner(p)
        out.append(runners[p.id].predict(variant, temperature))
    return out

