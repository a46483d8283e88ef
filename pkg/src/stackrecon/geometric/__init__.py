from .compile import (Compiler, GeometricOutcome, Keyframe, PlacementError, Trajectory, compile_plan,
                      resolve_placements, trajectory_rows)
from .ik import HandTarget, Obstacle, SolverSettings, solve_arm, solve_keyframe
from .robot import ARMS, ArmModel, RobotModel, arm_fk, hand_pose
