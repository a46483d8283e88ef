"""Per-problem full evaluation: geometry plus stability, memoised on states."""
from __future__ import annotations

from typing import Dict, Iterable, List, Optional

from .geometric.compile import Compiler, GeometricOutcome
from .geometric.ik import SolverSettings
from .geometric.robot import RobotModel
from .physics.stability import (FullSolution, SimulationParams, StabilityVerdict, check_scene,
                                label_verdicts, scene_key)
from .planner.schedule import SymbolicPlan
from .scene import Problem


class ProblemPipeline:
    """Compile and stability-check plans of one problem.

    The scene a plan leaves on the table at each timestep depends only on the
    interned geometric state, so each distinct state is simulated once.
    """

    def __init__(self, problem: Problem, robot: Optional[RobotModel] = None,
                 settings: SolverSettings = SolverSettings(),
                 params: SimulationParams = SimulationParams()):
        self.problem = problem
        self.params = params
        self.compiler = Compiler(problem, robot, settings)
        self._blocks = {b.id: b for b in problem.initial.blocks}
        self._verdicts: Dict[int, StabilityVerdict] = {}

    def state_verdict(self, sid: int) -> StabilityVerdict:
        v = self._verdicts.get(sid)
        if v is None:
            st = self.compiler.resolver.states[sid]
            poses = st.pose
            key = scene_key(self._blocks, {b: poses[b] for b in st.grounded()})
            v = self._verdicts[sid] = check_scene(key, self.params)
        return v

    def evaluate(self, plan: SymbolicPlan) -> FullSolution:
        """Geometry and stability verdicts of one plan (configurations not built)."""
        geo = self.compiler.geometry(plan)
        sol = FullSolution(plan, geo)
        if geo.feasible:
            sol.verdicts = label_verdicts(plan, [self.state_verdict(i) for i in geo.state_ids[1:]])
        return sol

    def evaluate_all(self, plans: Iterable[SymbolicPlan]) -> List[FullSolution]:
        return [self.evaluate(p) for p in plans]

    def compile(self, plan: SymbolicPlan, samples_per_segment: int = 20) -> GeometricOutcome:
        return self.compiler.compile(plan, samples_per_segment)
