"""Compile a timestamped symbolic plan into keyframes and configurations."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..geometry import Pose, box_corners, box_overlap_volume, matrix_to_quat
from ..planner.schedule import SymbolicPlan
from ..planner.symbolic import FIX, GRASP, Move, SymbolicState, apply_move, domain_from_problem
from ..scene import TABLE, FrameTree, Problem, StackConfiguration
from .ik import HandTarget, Obstacle, SolverSettings, solve_keyframe
from .robot import ARMS, RobotModel, arm_fk

FINGER_GAP = 0.006


class PlacementError(ValueError):
    pass


@dataclass(frozen=True)
class GeoState:
    """World pose of every block plus which hand holds what.

    ``poses`` keeps the last resolved pose of every block, including held
    ones (their pose at pickup); ``held`` maps actuator -> block and
    ``riding`` maps each block carried on a held block to the block beneath it.
    """

    poses: Tuple[Tuple[str, Pose], ...]
    held: Tuple[Tuple[str, str], ...] = ()
    riding: Tuple[Tuple[str, str], ...] = ()

    @property
    def pose(self) -> Dict[str, Pose]:
        return dict(self.poses)

    @property
    def in_hand(self) -> Dict[str, str]:
        return dict(self.held)

    def grounded(self) -> List[str]:
        off = set(b for _, b in self.held) | set(b for b, _ in self.riding)
        return [b for b, _ in self.poses if b not in off]

    def riders(self, block: str) -> List[str]:
        """Blocks riding (directly or transitively) on ``block``."""
        below = dict(self.riding)
        out = []
        for b in below:
            cur = below[b]
            while cur in below and cur != block:
                cur = below[cur]
            if cur == block:
                out.append(b)
        return sorted(out)


@dataclass
class Keyframe:
    timestamp: int
    q: np.ndarray
    config: StackConfiguration


@dataclass
class Trajectory:
    keyframes: List[Keyframe]
    samples: List[Tuple[float, np.ndarray]]      # (fractional time, 12-vector)


@dataclass
class GeometricOutcome:
    feasible: bool
    trajectory: Optional[Trajectory] = None
    reason: str = ""
    configurations: List[StackConfiguration] = field(default_factory=list)


def _upright(problem: Problem, block: str, xy, z_base: float) -> Pose:
    h = problem.initial.block(block).half_extents[2]
    return Pose.make((xy[0], xy[1], z_base + h))


def _overlaps(problem: Problem, a: str, pa: Pose, b: str, pb: Pose) -> bool:
    ha, hb = problem.initial.block(a).half_extents, problem.initial.block(b).half_extents
    if np.linalg.norm(np.subtract(pa.position, pb.position)) > np.linalg.norm(ha) + np.linalg.norm(hb):
        return False
    return _overlap_cached(a, pa, b, pb, tuple(ha), tuple(hb)) > 1e-9


_OVERLAP: Dict[tuple, float] = {}


def _overlap_cached(a, pa, b, pb, ha, hb) -> float:
    key = (pa, pb, ha, hb)
    if key not in _OVERLAP:
        _OVERLAP[key] = box_overlap_volume(pa, np.array(ha), pb, np.array(hb))
    return _OVERLAP[key]


def _step(problem: Problem, state: GeoState, sym: SymbolicState, moves: Sequence[Move]) -> Tuple[GeoState, SymbolicState]:
    poses = state.pose
    held = state.in_hand
    riding = dict(state.riding)
    domain = _domain(problem)
    for m in moves:
        if m.kind == GRASP:
            held[m.actuator] = m.object
            riding.update({c: sym.support_of(c) for c in sym.above(m.object)})
        sym = apply_move(sym, domain, m)
    for m in moves:
        if m.kind == GRASP:
            continue
        b = m.object
        old = poses[b]
        carried = sym.above(b)
        if m.kind == FIX:
            new = problem.target.pose(b)
        elif m.support == TABLE:
            new = _free_spot(problem, b, carried, poses, held, riding)
        else:
            sp = poses[m.support]
            top = box_corners(sp, problem.initial.block(m.support).half_extents)[:, 2].max()
            new = _upright(problem, b, sp.position[:2], top)
        rel = old.inverse()
        for c in carried:
            poses[c] = new.compose(rel.compose(poses[c]))
            riding.pop(c, None)
        poses[b] = new
        del held[m.actuator]
    off = set(held.values()) | set(riding)
    ground = [b for b in sorted(poses) if b not in off]
    for b in ground:
        if box_corners(poses[b], problem.initial.block(b).half_extents)[:, 2].min() < -1e-6:
            raise PlacementError(f"block {b} would be placed below the table")
    for i, a in enumerate(ground):
        for b in ground[i + 1:]:
            if _overlaps(problem, a, poses[a], b, poses[b]):
                raise PlacementError(f"blocks {a} and {b} would interpenetrate")
    return GeoState(tuple(sorted(poses.items())), tuple(sorted(held.items())), tuple(sorted(riding.items()))), sym


def _free_spot(problem: Problem, block: str, carried, poses, held, riding) -> Pose:
    off = set(held.values()) | set(riding) | {block} | set(carried)
    for k in range(len(problem.layout.spots)):
        cand = _upright(problem, block, problem.layout.spot_position(k), 0.0)
        if all(not _overlaps(problem, block, cand, o, poses[o]) for o in poses if o not in off):
            return cand
    raise PlacementError(f"no free table spot for a temporary placement of {block}")


_DOMAINS: Dict[int, object] = {}


def _domain(problem: Problem):
    key = id(problem)
    if key not in _DOMAINS or _DOMAINS[key][0] is not problem:
        _DOMAINS[key] = (problem, domain_from_problem(problem))
    return _DOMAINS[key][1]


def initial_geostate(problem: Problem) -> GeoState:
    return GeoState(tuple(sorted((b, problem.initial.pose(b)) for b in problem.block_ids)))


class Resolver:
    """Memoised timestep transitions shared by every plan of one problem.

    Geometric states are interned: ``states[i]`` is the state with id ``i``.
    """

    def __init__(self, problem: Problem):
        self.problem = problem
        self.domain = _domain(problem)
        self.states: List[GeoState] = [initial_geostate(problem)]
        self._ids: Dict[GeoState, int] = {self.states[0]: 0}
        self.cache: Dict[tuple, object] = {}

    def _intern(self, st: GeoState) -> int:
        i = self._ids.get(st)
        if i is None:
            i = self._ids[st] = len(self.states)
            self.states.append(st)
        return i

    def step_id(self, sid: int, sym: SymbolicState, moves: Sequence[Move]) -> Tuple[int, SymbolicState]:
        key = (sid, sym, tuple(m.key for m in moves))
        out = self.cache.get(key)
        if out is None:
            try:
                st, nsym = _step(self.problem, self.states[sid], sym, moves)
                out = (self._intern(st), nsym)
            except PlacementError as err:
                out = err
            self.cache[key] = out
        if isinstance(out, PlacementError):
            raise out
        return out

    def step(self, state: GeoState, sym: SymbolicState, moves: Sequence[Move]):
        sid, nsym = self.step_id(self._intern(state), sym, moves)
        return self.states[sid], nsym

    def resolve_ids(self, plan: SymbolicPlan) -> List[int]:
        ids = [0]
        sym = self.domain.initial
        for t in range(1, plan.s + 1):
            try:
                sid, sym = self.step_id(ids[-1], sym, plan.at(t))
            except PlacementError as err:
                raise PlacementError(f"timestep {t}: {err}") from None
            ids.append(sid)
        return ids

    def resolve(self, plan: SymbolicPlan) -> List[GeoState]:
        return [self.states[i] for i in self.resolve_ids(plan)]


def resolve_placements(plan: SymbolicPlan, problem: Problem) -> List[Dict[str, Pose]]:
    """Per-timestep world poses of every block (held blocks keep their pickup pose)."""
    return [s.pose for s in Resolver(problem).resolve(plan)]


# grasp selection ---------------------------------------------------------

def grasp_candidates(rot_pick: np.ndarray, rot_release: np.ndarray) -> List[Tuple[np.ndarray, int]]:
    """Hand orientations in the block frame, best first.

    The pincer closes across the block's width or depth axis; the approach is
    one of the remaining local axes.  Candidates are ordered by how squarely
    they come from above at both pickup and release; ones that would approach
    from below at either keyframe are dropped.
    """
    eye = np.eye(3)
    out = []
    for k in (0, 1):
        for sy in (1.0, -1.0):
            y = sy * eye[k]
            for j in (1 - k, 2):
                for sx in (1.0, -1.0):
                    x = sx * eye[j]
                    R = np.column_stack([x, y, np.cross(x, y)])
                    a_pick = (rot_pick @ x)[2]
                    a_rel = (rot_release @ x)[2]
                    if max(a_pick, a_rel) > 0.3:
                        continue
                    horiz = abs((rot_pick @ y)[2]) + abs((rot_release @ y)[2])
                    out.append(((a_pick + a_rel, horiz, k, -sy, j, -sx), R, k))
    out.sort(key=lambda r: r[0])
    return [(R, k) for _, R, k in out]


def _hand_target(block_pose: Pose, grip: np.ndarray, half: np.ndarray, axis: int) -> HandTarget:
    R = block_pose.rotation @ grip
    pose = Pose(block_pose.position, matrix_to_quat(R))
    return HandTarget.from_pose(pose, half[axis] + FINGER_GAP)


def _obstacles(problem: Problem, st: GeoState, exclude) -> Tuple[Obstacle, ...]:
    poses = st.pose
    return tuple(Obstacle.from_pose(poses[b], problem.initial.block(b).half_extents)
                 for b in st.grounded() if b not in exclude)


def _config(problem: Problem, st: GeoState, q: np.ndarray, robot: RobotModel,
            grips: Dict[str, Pose]) -> StackConfiguration:
    poses = st.pose
    held = st.in_hand
    items = []
    hand_world = {}
    for k, name in enumerate(ARMS):
        kin = arm_fk(robot.arms[k], q[6 * k:6 * k + 6])
        hand_world[name] = Pose(tuple(float(c) for c in kin.hand_pos), matrix_to_quat(kin.hand_rot))
        items.append((name, TABLE, hand_world[name]))
    block_of_hand = {b: a for a, b in held.items()}
    for b in sorted(poses):
        if b in block_of_hand:
            items.append((b, block_of_hand[b], grips[b].inverse()))
        else:
            items.append((b, TABLE, poses[b]))
    for b, carrier in st.riding:
        items = [e for e in items if e[0] != b]
        items.append((b, carrier, poses[b].relative_to(poses[carrier])))
    return StackConfiguration(problem.initial.blocks, FrameTree.build(items))


# a chosen grip: (pickup orientation, release orientation, candidate index)
GripRef = Tuple[Tuple[float, ...], Tuple[float, ...], int]


@dataclass
class PlanGeometry:
    """Keyframe solution of a plan, before configurations are derived."""

    feasible: bool
    reason: str = ""
    state_ids: List[int] = field(default_factory=list)
    grips: List[Dict[str, GripRef]] = field(default_factory=list)     # per timestep, per held block
    q: List[np.ndarray] = field(default_factory=list)


class Compiler:
    """Geometric compilation of the plans of one problem.

    Grasp choices and keyframe solves are memoised on interned state ids, so
    plans that share timesteps share the work.
    """

    def __init__(self, problem: Problem, robot: Optional[RobotModel] = None,
                 settings: SolverSettings = SolverSettings(), max_grasps: int = 8):
        self.problem = problem
        self.robot = robot or RobotModel.default(problem.layout.spots[1])
        self.settings = settings
        self.max_grasps = max_grasps
        self.resolver = Resolver(problem)
        self._grasp: Dict[tuple, object] = {}
        self._frame: Dict[tuple, Tuple[Optional[np.ndarray], str]] = {}
        self._cands: Dict[tuple, list] = {}

    def _half(self, b: str) -> np.ndarray:
        return self.problem.initial.block(b).half_extents

    def _candidates(self, pick: Tuple[float, ...], rel: Tuple[float, ...]):
        key = (pick, rel)
        if key not in self._cands:
            cands = grasp_candidates(Pose((0, 0, 0), pick).rotation, Pose((0, 0, 0), rel).rotation)
            self._cands[key] = cands[:self.max_grasps]
        return self._cands[key]

    def grip(self, ref: GripRef) -> Tuple[np.ndarray, int]:
        """Hand orientation in the block frame and the closing axis of a grip."""
        return self._candidates(ref[0], ref[1])[ref[2]]

    def _arm_input(self, sid_prev: int, sid: int, b: str, pose: Pose, grip) -> Tuple[HandTarget, tuple]:
        states = self.resolver.states
        st = states[sid]
        carried = set(st.riders(b)) | set(states[sid_prev].riders(b))
        R, axis = grip
        return _hand_target(pose, R, self._half(b), axis), _obstacles(self.problem, st, {b} | carried)

    def choose_grasp(self, b: str, g: Move, r: Move, ids: Sequence[int]):
        """GripRef of the first candidate both keyframes can reach, or the failure reason."""
        key = (b, g.actuator, r.actuator, ids[g.timestamp - 1], ids[g.timestamp],
               ids[r.timestamp - 1], ids[r.timestamp])
        out = self._grasp.get(key)
        if out is not None:
            return out
        states = self.resolver.states
        pick = states[ids[g.timestamp - 1]].pose[b]
        rel = states[ids[r.timestamp]].pose[b]
        out = "no grasp candidate"
        for i, grip in enumerate(self._candidates(pick.orientation, rel.orientation)):
            q = None
            for m, pose in ((g, pick), (r, rel)):
                t = m.timestamp
                target, obs = self._arm_input(ids[t - 1], ids[t], b, pose, grip)
                tg, ob = [None, None], [(), ()]
                k = ARMS.index(m.actuator)
                tg[k], ob[k] = target, obs
                q, why = solve_keyframe(self.robot, tg, ob, self.settings)
                if q is None:
                    out = why
                    break
            if q is not None:
                out = (pick.orientation, rel.orientation, i)
                break
        self._grasp[key] = out
        return out

    def keyframe(self, t: int, moves: Sequence[Move], ids: Sequence[int],
                 grips: Dict[str, GripRef]) -> Tuple[Optional[np.ndarray], str]:
        movers = {m.actuator: m for m in moves}
        sig = tuple((a, m.kind, m.object, grips[m.object]) for a, m in sorted(movers.items()))
        key = (ids[t - 1], ids[t], sig)
        out = self._frame.get(key)
        if out is not None:
            return out
        states = self.resolver.states
        st_prev, st = states[ids[t - 1]], states[ids[t]]
        targets, obstacles = [None, None], [(), ()]
        for k, name in enumerate(ARMS):
            m = movers.get(name)
            if m is None:
                obstacles[k] = _obstacles(self.problem, st, ())
                continue
            b = m.object
            pose = st_prev.pose[b] if m.kind == GRASP else st.pose[b]
            targets[k], obstacles[k] = self._arm_input(ids[t - 1], ids[t], b, pose, self.grip(grips[b]))
        out = solve_keyframe(self.robot, targets, obstacles, self.settings)
        self._frame[key] = out
        return out

    def geometry(self, plan: SymbolicPlan) -> PlanGeometry:
        try:
            ids = self.resolver.resolve_ids(plan)
        except PlacementError as err:
            return PlanGeometry(False, str(err))
        open_grasp: Dict[str, Move] = {}
        grips: List[Dict[str, GripRef]] = [dict() for _ in range(plan.s + 1)]
        for m in plan.moves:
            if m.kind == GRASP:
                open_grasp[m.actuator] = m
                continue
            g = open_grasp.pop(m.actuator)
            b = m.object
            choice = self.choose_grasp(b, g, m, ids)
            if isinstance(choice, str):
                return PlanGeometry(False, f"timestep {g.timestamp}: grasp of {b} infeasible ({choice})", ids)
            for t in range(g.timestamp, m.timestamp + 1):
                grips[t][b] = choice
        qs = [self.robot.neutral.copy()]
        for t in range(1, plan.s + 1):
            q, why = self.keyframe(t, plan.at(t), ids, grips[t])
            if q is None:
                return PlanGeometry(False, f"timestep {t}: {why}", ids, grips)
            qs.append(q)
        return PlanGeometry(True, "", ids, grips, qs)

    def configuration(self, geo: PlanGeometry, t: int) -> StackConfiguration:
        """Scene at timestep ``t``: hands at their keyframe poses, held blocks attached."""
        if t == 0:
            return self.problem.initial
        st = self.resolver.states[geo.state_ids[t]]
        grip_poses = {b: Pose((0.0, 0.0, 0.0), matrix_to_quat(self.grip(ref)[0]))
                      for b, ref in geo.grips[t].items() if b in st.in_hand.values()}
        return _config(self.problem, st, geo.q[t], self.robot, grip_poses)

    def compile(self, plan: SymbolicPlan, samples_per_segment: int = 20) -> GeometricOutcome:
        geo = self.geometry(plan)
        if not geo.feasible:
            return GeometricOutcome(False, reason=geo.reason)
        configs = [self.configuration(geo, t) for t in range(plan.s + 1)]
        keyframes = [Keyframe(t, geo.q[t], configs[t]) for t in range(plan.s + 1)]
        samples = []
        for a, b in zip(keyframes[:-1], keyframes[1:]):
            for i in range(samples_per_segment):
                u = i / samples_per_segment
                samples.append((a.timestamp + u, (1 - u) * a.q + u * b.q))
        samples.append((float(keyframes[-1].timestamp), keyframes[-1].q.copy()))
        return GeometricOutcome(True, Trajectory(keyframes, samples), "", configs)


def compile_plan(plan: SymbolicPlan, problem: Problem, robot: Optional[RobotModel] = None,
                 settings: SolverSettings = SolverSettings(), samples_per_segment: int = 20,
                 compiler: Optional[Compiler] = None) -> GeometricOutcome:
    """Keyframes (one per timestep plus the neutral start), interpolated samples
    and the stack configuration at every timestep; infeasible plans carry the
    first violated constraint in ``reason``."""
    compiler = compiler or Compiler(problem, robot, settings)
    return compiler.compile(plan, samples_per_segment)


def trajectory_rows(outcome: GeometricOutcome) -> List[Dict[str, object]]:
    """One row per keyframe: the 12 joint values and every block's world pose."""
    rows = []
    if not outcome.feasible:
        return rows
    for kf in outcome.trajectory.keyframes:
        row: Dict[str, object] = {"timestep": kf.timestamp}
        for k, arm in enumerate(ARMS):
            for j in range(6):
                row[f"{arm}_q{j + 1}"] = float(kf.q[6 * k + j])
        cfg = kf.config
        for b in sorted(cfg.block_ids):
            p = cfg.pose(b)
            for name, v in zip(("x", "y", "z"), p.position):
                row[f"{b}_{name}"] = float(v)
            for name, v in zip(("qw", "qx", "qy", "qz"), p.orientation):
                row[f"{b}_{name}"] = float(v)
        rows.append(row)
    return rows
