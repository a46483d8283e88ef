"""Kinetic-energy stability checks on statically posed configurations."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..geometry import Pose, quat_normalize
from ..scene import TABLE, StackConfiguration
from .engine import simulate

STABLE = "stable"
UNSTABLE = "unstable"
RECOVERABLE = "unstableRecoverable"
FATAL = "unstableFatal"

AGGREGATIONS = ("sum", "mean", "peak")


@dataclass(frozen=True)
class SimulationParams:
    duration: float = 1.0
    burn_in: float = 0.1
    energy_threshold: float = 0.1
    gravity: float = 9.81
    timestep: float = 1.0 / 240.0
    friction: float = 0.5
    restitution: float = 0.0
    # "sum": sum of per-step kinetic energy after burn-in (J)
    # "mean": trapezoidal integral divided by the window length (J)
    # "peak": largest per-step kinetic energy after burn-in (J)
    aggregation: str = "sum"
    velocity_iterations: int = 30
    position_iterations: int = 10
    baumgarte: float = 0.2
    slop: float = 0.0005
    margin: float = 0.004
    displacement_threshold: float = 0.005

    def __post_init__(self):
        if not 0 <= self.burn_in < self.duration:
            raise ValueError("burn_in must lie in [0, duration)")
        for name in ("duration", "energy_threshold", "gravity", "timestep", "friction",
                     "displacement_threshold"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.restitution <= 1.0:
            raise ValueError("restitution must lie in [0, 1]")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.timestep))

    @property
    def burn_in_steps(self) -> int:
        return int(round(self.burn_in / self.timestep))


@dataclass(frozen=True)
class StabilityVerdict:
    label: str
    measured_energy: float
    settled: Optional[StackConfiguration]
    displaced: Tuple[str, ...] = ()
    diverged: bool = False

    @property
    def unstable(self) -> bool:
        return self.label != STABLE

    def with_label(self, label: str) -> "StabilityVerdict":
        return StabilityVerdict(label, self.measured_energy, self.settled, self.displaced, self.diverged)


def aggregate_energy(energy: np.ndarray, params: SimulationParams) -> float:
    window = energy[params.burn_in_steps:]
    if len(window) == 0:
        return 0.0
    if not np.all(np.isfinite(window)):
        return float("inf")
    if params.aggregation == "sum":
        return float(window.sum())
    if params.aggregation == "peak":
        return float(window.max())
    if len(window) == 1:
        return float(window[0])
    span = (len(window) - 1) * params.timestep
    return float(np.trapezoid(window, dx=params.timestep) / span)


def scene_key(blocks, poses: Dict[str, Pose]) -> Tuple:
    """Hashable description of a free-standing scene: ``blocks`` maps id to
    BlockSpec, ``poses`` gives the world pose of every simulated block."""
    rows = []
    for b in sorted(poses):
        spec = blocks[b]
        pose = poses[b]
        rows.append((b, tuple(round(float(c), 12) for c in pose.position),
                     tuple(round(float(c), 12) for c in pose.orientation),
                     tuple(float(c) for c in spec.half_extents), float(spec.mass)))
    return tuple(rows)


def _scene_key(config: StackConfiguration) -> Tuple:
    blocks = {b: config.block(b) for b in config.grounded_ids()}
    return scene_key(blocks, {b: config.pose(b) for b in blocks})


@lru_cache(maxsize=65536)
def _run(key: Tuple, params: SimulationParams):
    pos = np.array([r[1] for r in key], float).reshape(-1, 3)
    quat = np.array([r[2] for r in key], float).reshape(-1, 4)
    half = np.array([r[3] for r in key], float).reshape(-1, 3)
    mass = np.array([r[4] for r in key], float)
    energy, disp, p, q, diverged = simulate(
        pos, quat, half, mass, params.n_steps, params.timestep, params.gravity,
        params.friction, params.restitution, params.velocity_iterations,
        params.position_iterations, params.baumgarte, params.slop, params.margin)
    return energy, disp, p, q, bool(diverged)


def simulate_configuration(config: StackConfiguration, params: SimulationParams = SimulationParams()):
    """Raw simulation of the grounded blocks: (ids, energy, displacement, positions, quaternions, diverged)."""
    key = _scene_key(config)
    ids = [r[0] for r in key]
    if not ids:
        z = np.zeros(params.n_steps)
        return ids, z, np.zeros((params.n_steps, 0)), np.zeros((0, 3)), np.zeros((0, 4)), False
    energy, disp, p, q, diverged = _run(key, params)
    return ids, energy, disp, p, q, diverged


def check_stability(config: StackConfiguration, params: SimulationParams = SimulationParams()) -> StabilityVerdict:
    """Simulate from rest and compare aggregated kinetic energy with the threshold.

    Held blocks (and anything riding on them) are left out of the simulated
    scene.  The label is ``stable`` or ``unstable``; intermediate instabilities
    are refined by :func:`classify_recoverable`.
    """
    ids, energy, disp, p, q, diverged = simulate_configuration(config, params)
    label, measured, moved = _judge(ids, energy, disp, diverged, params)
    settled = None
    if not diverged and ids:
        tree = config.tree
        for k, b in enumerate(ids):
            qn = quat_normalize(tuple(float(c) for c in q[k]))
            tree = tree.with_entry(b, TABLE, Pose(tuple(float(c) for c in p[k]), qn))
        settled = StackConfiguration(config.blocks, tree)
    elif not ids:
        settled = config
    return StabilityVerdict(label, measured, settled, moved, diverged)


def _judge(ids, energy, disp, diverged, params: SimulationParams):
    measured = float("inf") if diverged else aggregate_energy(energy, params)
    moved: Tuple[str, ...] = ()
    if ids:
        window = disp[params.burn_in_steps:]
        peak = window.max(axis=0) if len(window) else np.zeros(len(ids))
        moved = tuple(b for b, d in zip(ids, peak) if not np.isfinite(d) or d > params.displacement_threshold)
    label = STABLE if measured <= params.energy_threshold else UNSTABLE
    return label, measured, moved


def check_scene(key: Tuple, params: SimulationParams = SimulationParams()) -> StabilityVerdict:
    """Like :func:`check_stability` for a :func:`scene_key`; no settled configuration."""
    ids = [r[0] for r in key]
    if not ids:
        return StabilityVerdict(STABLE, 0.0, None)
    energy, disp, _, _, diverged = _run(key, params)
    label, measured, moved = _judge(ids, energy, disp, diverged, params)
    return StabilityVerdict(label, measured, None, moved, diverged)


def classify_recoverable(verdict: StabilityVerdict, next_actuated: Iterable[str],
                         remainder_reaches_target: bool = True) -> str:
    """Recoverable iff every displaced block is actuated at the next timestep
    and the rest of the plan still reaches the target."""
    if not verdict.unstable:
        return STABLE
    nxt = set(next_actuated)
    if verdict.diverged or not verdict.displaced:
        return FATAL
    if remainder_reaches_target and all(b in nxt for b in verdict.displaced):
        return RECOVERABLE
    return FATAL


@dataclass
class FullSolution:
    plan: object                      # planner.SymbolicPlan
    outcome: object                   # geometric.GeometricOutcome
    verdicts: List[StabilityVerdict] = field(default_factory=list)
    cost: Optional[float] = None

    @property
    def accepted(self) -> bool:
        return bool(getattr(self.outcome, "feasible", True)) and not any(v.label == FATAL for v in self.verdicts)

    @property
    def recoverable_count(self) -> int:
        return sum(v.label == RECOVERABLE for v in self.verdicts)


def actuated_by_timestep(plan) -> Dict[int, set]:
    out: Dict[int, set] = {}
    for m in plan.moves:
        out.setdefault(m.timestamp, set()).add(m.object)
    return out


def label_verdicts(plan, verdicts: Sequence[StabilityVerdict]) -> List[StabilityVerdict]:
    """Refine raw verdicts for timesteps 1..s into stable / recoverable / fatal."""
    acts = actuated_by_timestep(plan)
    out = []
    for t, v in enumerate(verdicts, start=1):
        if v.unstable:
            if t == len(verdicts):
                label = FATAL  # the finished stack must stand on its own
            else:
                label = classify_recoverable(v, acts.get(t + 1, ()))
            v = v.with_label(label)
        out.append(v)
    return out


def evaluate_solution(plan, outcome, params: SimulationParams = SimulationParams()) -> FullSolution:
    """Check every emitted configuration after the initial one."""
    sol = FullSolution(plan, outcome)
    if not getattr(outcome, "feasible", False):
        return sol
    configs = outcome.configurations
    sol.verdicts = label_verdicts(plan, [check_stability(c, params) for c in configs[1:]])
    return sol


def filter_solutions(pairs: Sequence[Tuple[object, object]],
                     params: SimulationParams = SimulationParams()) -> List[FullSolution]:
    """Stability-check every (plan, geometric outcome) pair; rejected ones are kept."""
    return [evaluate_solution(plan, outcome, params) for plan, outcome in pairs]


def verdict_log(problem_id: int, index: int, sol: FullSolution) -> List[Dict[str, object]]:
    rows = []
    for t, v in enumerate(sol.verdicts, start=1):
        rows.append({"problem_id": problem_id, "solution": index, "timestep": t, "label": v.label,
                     "energy_j": v.measured_energy, "displaced": " ".join(v.displaced)})
    return rows
