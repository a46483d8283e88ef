import math

import numpy as np
import pytest

from stackrecon.geometric.compile import (Compiler, PlacementError, Resolver, _hand_target, compile_plan,
                                          grasp_candidates, trajectory_rows)
from stackrecon.geometric.ik import ArmProblem, Obstacle, SolverSettings, solve_arm, solve_keyframe
from stackrecon.geometric.robot import (N_JOINTS, RobotModel, arm_fk, arm_segments, arms_distance, hand_pose,
                                        segment_distance)
from stackrecon.geometry import Pose, quat_from_axis_angle
from stackrecon.planner import FIX, GRASP, PLACE, Move, SymbolicPlan, assign_timestamps, enumerate_plans
from stackrecon.problem_io import load_bundled
from stackrecon.scene import TABLE, BlockSpec, Problem, TableLayout, config_from_world

ROBOT = RobotModel.default(0.0)
HALF = BlockSpec("b").half_extents
LAYOUT = TableLayout((-0.15, 0.0, 0.15), (-0.35, -0.2), (0.35, 0.2))


@pytest.fixture(scope="module")
def problems():
    return load_bundled()


def _angle_deg(Ra, Rb):
    c = np.clip((np.trace(Ra.T @ Rb) - 1) / 2, -1, 1)
    return math.degrees(math.acos(c))


def _two_block_problem(x1, x2, t1=-0.15, t2=0.15):
    blocks = [BlockSpec("b1"), BlockSpec("b2")]
    ini = config_from_world(blocks, {"b1": Pose.make((x1, 0, 0.05)), "b2": Pose.make((x2, 0, 0.05))})
    tgt = config_from_world(blocks, {"b1": Pose.make((t1, 0, 0.05)), "b2": Pose.make((t2, 0, 0.05))})
    return Problem(99, ini, tgt, LAYOUT)


def check_keyframe_poses(compiler, plan, tol_m=1e-3, tol_deg=1.0):
    """Forward kinematics of each keyframe against the hand pose its moves demand."""
    geo = compiler.geometry(plan)
    assert geo.feasible, geo.reason
    states = compiler.resolver.states
    ids = geo.state_ids
    for t in range(1, plan.s + 1):
        for m in plan.at(t):
            b = m.object
            pose = states[ids[t - 1]].pose[b] if m.kind == GRASP else states[ids[t]].pose[b]
            target, _ = compiler._arm_input(ids[t - 1], ids[t], b, pose, compiler.grip(geo.grips[t][b]))
            k = ("handL", "handR").index(m.actuator)
            kin = arm_fk(compiler.robot.arms[k], geo.q[t][6 * k:6 * k + 6])
            assert np.linalg.norm(kin.hand_pos - np.array(target.position)) < tol_m
            assert _angle_deg(kin.hand_rot, target.R) < tol_deg
    return geo


# robot model --------------------------------------------------------------

def test_robot_has_twelve_joints_within_limits():
    assert ROBOT.n_dof == 12 and ROBOT.neutral.shape == (12,)
    for arm in ROBOT.arms:
        lo, hi = np.array(arm.lower), np.array(arm.upper_limit)
        assert np.all(lo <= arm.neutral) and np.all(np.array(arm.neutral) <= hi)


def test_hand_pose_matches_forward_kinematics():
    q = np.array(ROBOT.arms[1].neutral)
    pose = hand_pose(ROBOT, "handR", q)
    kin = arm_fk(ROBOT.arms[1], q)
    assert np.allclose(pose.position, kin.hand_pos)
    assert np.allclose(pose.rotation, kin.hand_rot, atol=1e-12)


def test_segment_distance_examples():
    o, x = np.zeros(3), np.array([1.0, 0, 0])
    assert segment_distance(o, x, np.array([0.5, 1.0, 0]), np.array([0.5, 2.0, 0])) == pytest.approx(1.0)
    assert segment_distance(o, x, np.array([0.5, -1, 0.3]), np.array([0.5, 1, 0.3])) == pytest.approx(0.3)
    assert segment_distance(o, x, np.array([2.0, 0, 0]), np.array([3.0, 0, 0])) == pytest.approx(1.0)


def test_neutral_arms_are_apart():
    assert arms_distance(ROBOT, ROBOT.neutral) > 0.1
    assert len(arm_segments(ROBOT.arms[0], ROBOT.arms[0].neutral, 0.03)) == 7


# inverse kinematics -------------------------------------------------------

def test_unconstrained_arms_stay_at_neutral():
    q, why = solve_keyframe(ROBOT, [None, None], [(), ()])
    assert why == "" and np.array_equal(q, ROBOT.neutral)


def _block_grip_target(xyz, k=1):
    grip, axis = grasp_candidates(np.eye(3), np.eye(3))[k]
    return _hand_target(Pose.make(xyz), grip, HALF, axis)


def test_hand_reaches_a_table_pose():
    target = _block_grip_target((0.0, 0.0, 0.05))
    sol = solve_arm(ROBOT.arms[1], target, ())
    assert sol.feasible, sol.reason
    kin = arm_fk(ROBOT.arms[1], sol.q)
    assert np.linalg.norm(kin.hand_pos - target.position) < 1e-3
    assert _angle_deg(kin.hand_rot, target.R) < 1.0


def test_far_target_is_unreachable():
    target = _block_grip_target((10.0, 0.0, 0.05))
    sol = solve_arm(ROBOT.arms[0], target, ())
    assert not sol.feasible and "reach" in sol.reason


def test_reachable_pose_outside_joint_limits_says_so():
    # candidate 0 rolls the hand beyond the wrist's range at the middle spot
    sol = solve_arm(ROBOT.arms[1], _block_grip_target((0.0, 0.0, 0.05), k=0), ())
    assert not sol.feasible and sol.reason == "joint limits"


def test_merit_gradient_matches_central_differences():
    rng = np.random.default_rng(2)
    arm = ROBOT.arms[1]
    obstacle = Obstacle.from_pose(Pose.make((0.15, 0.0, 0.05)), (0.025, 0.025, 0.05))
    target = _block_grip_target((0.0, 0.0, 0.05))
    prob = ArmProblem(arm, target, [obstacle])
    n_ineq = len(prob.inequality(np.array(arm.neutral))[0])
    h = 1e-6
    for _ in range(100):
        q = rng.uniform(-2.4, 2.4, size=N_JOINTS)
        lam = rng.normal(size=12)
        nu = np.abs(rng.normal(size=n_ineq))
        mu = float(rng.uniform(1.0, 100.0))
        _, g = prob.merit(q, lam, nu, mu)
        fd = np.zeros(N_JOINTS)
        for j in range(N_JOINTS):
            e = np.zeros(N_JOINTS)
            e[j] = h
            fd[j] = (prob.merit(q + e, lam, nu, mu)[0] - prob.merit(q - e, lam, nu, mu)[0]) / (2 * h)
        assert np.linalg.norm(g - fd) <= 1e-5 * max(np.linalg.norm(g), 1.0)


def test_grasp_candidates_are_rotations():
    cands = grasp_candidates(np.eye(3), np.eye(3))
    assert cands
    for R, axis in cands:
        assert np.allclose(R @ R.T, np.eye(3), atol=1e-12) and np.linalg.det(R) == pytest.approx(1.0)
        assert axis in (0, 1, 2)


# plan compilation ---------------------------------------------------------

def test_empty_plan_is_a_single_neutral_keyframe(problems):
    out = compile_plan(SymbolicPlan(()), problems[1])
    assert out.feasible
    assert len(out.trajectory.keyframes) == 1
    assert np.array_equal(out.trajectory.keyframes[0].q, ROBOT.neutral)
    assert out.configurations == [problems[1].initial]
    assert len(trajectory_rows(out)) == 1


def test_two_move_plan_has_three_keyframes(problems):
    p = problems[0]
    plan = enumerate_plans(p, "efficient").plans[0]
    assert len(plan.moves) == 2
    compiler = Compiler(p)
    out = compiler.compile(plan, samples_per_segment=5)
    assert out.feasible, out.reason
    assert [k.timestamp for k in out.trajectory.keyframes] == [0, 1, 2]
    assert len(out.configurations) == plan.s + 1
    assert len(out.trajectory.samples) == 2 * 5 + 1
    check_keyframe_poses(compiler, plan)
    rows = trajectory_rows(out)
    assert [r["timestep"] for r in rows] == [0, 1, 2]
    # the Fix leaves b1 at its target pose
    assert np.allclose(out.configurations[-1].pose("b1").position, p.target.pose("b1").position, atol=1e-9)


def test_held_block_rides_with_its_hand(problems):
    p = problems[0]
    plan = enumerate_plans(p, "efficient").plans[0]
    out = compile_plan(plan, p)
    grasp = plan.moves[0]
    cfg = out.configurations[grasp.timestamp]
    assert cfg.tree.parent(grasp.object) == grasp.actuator
    # attaching to the hand does not move the block
    assert np.allclose(cfg.pose(grasp.object).position, p.initial.pose(grasp.object).position, atol=1e-6)
    q = out.trajectory.keyframes[grasp.timestamp].q
    k = ("handL", "handR").index(grasp.actuator)
    assert np.allclose(cfg.pose(grasp.actuator).position, hand_pose(ROBOT, grasp.actuator, q[6 * k:6 * k + 6]).position,
                       atol=1e-9)


def test_keyframes_reproduce_hand_poses_on_bundled_plans(problems):
    for pid in (1, 4, 7):
        compiler = Compiler(problems[pid - 1])
        for plan in enumerate_plans(problems[pid - 1], "efficient").plans[:6]:
            if compiler.geometry(plan).feasible:
                check_keyframe_poses(compiler, plan)


def test_crowded_concurrent_grasps_are_infeasible():
    p = _two_block_problem(-0.03, 0.03)          # 1 cm gap between the blocks
    both = assign_timestamps([Move(GRASP, "b1", None, "handL"), Move(GRASP, "b2", None, "handR"),
                              Move(FIX, "b1", TABLE, "handL"), Move(FIX, "b2", TABLE, "handR")],
                             {"b1": TABLE, "b2": TABLE})
    out = compile_plan(both, p)
    assert not out.feasible and "timestep 1" in out.reason and "arm clearance" in out.reason
    one_by_one = assign_timestamps([Move(GRASP, "b1", None, "handL"), Move(FIX, "b1", TABLE, "handL"),
                                    Move(GRASP, "b2", None, "handL"), Move(FIX, "b2", TABLE, "handL")],
                                   {"b1": TABLE, "b2": TABLE})
    assert compile_plan(one_by_one, p).feasible


def test_temporary_place_goes_to_lowest_free_spot():
    blocks = [BlockSpec("b1"), BlockSpec("b2"), BlockSpec("b3")]
    world = {"b1": Pose.make((-0.15, 0, 0.05)), "b2": Pose.make((0.0, 0, 0.05)), "b3": Pose.make((0.0, 0, 0.15))}
    ini = config_from_world(blocks, world, {"b3": "b2"})
    tgt = config_from_world(blocks, {"b1": Pose.make((-0.15, 0, 0.05)), "b2": Pose.make((0.0, 0, 0.05)),
                                     "b3": Pose.make((-0.15, 0, 0.15))}, {"b3": "b1"})
    p = Problem(98, ini, tgt, LAYOUT)
    plan = assign_timestamps([Move(GRASP, "b3", None, "handR"), Move(PLACE, "b3", TABLE, "handR")],
                             {"b1": TABLE, "b2": TABLE, "b3": "b2"})
    last = Resolver(p).resolve(plan)[-1]
    assert np.allclose(last.pose["b3"].position, (0.15, 0.0, 0.05))


def test_temporary_place_without_a_free_spot_fails():
    layout = TableLayout((-0.06, 0.0, 0.06), (-0.35, -0.2), (0.35, 0.2))
    blocks = [BlockSpec("b1"), BlockSpec("b2"), BlockSpec("b3")]
    lay = quat_from_axis_angle((0, 1, 0), math.pi / 2)
    world = {"b2": Pose.make((-0.03, 0, 0.025), lay), "b1": Pose.make((-0.03, 0, 0.1)),
             "b3": Pose.make((0.06, 0, 0.05))}
    ini = config_from_world(blocks, world, {"b1": "b2"})
    tgt = config_from_world(blocks, {**world, "b1": Pose.make((0.06, 0, 0.15))}, {"b1": "b3"})
    p = Problem(97, ini, tgt, layout)
    plan = assign_timestamps([Move(GRASP, "b1", None, "handR"), Move(PLACE, "b1", TABLE, "handR")],
                             {"b1": "b2", "b2": TABLE, "b3": TABLE})
    with pytest.raises(PlacementError, match="no free table spot"):
        Resolver(p).resolve(plan)


def test_solver_settings_are_honoured(problems):
    p = problems[0]
    plan = enumerate_plans(p, "efficient").plans[0]
    strict = SolverSettings(clearance=0.5)
    assert not compile_plan(plan, p, settings=strict).feasible
