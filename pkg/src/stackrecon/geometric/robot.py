"""Two 6R arms with pincer hands: forward kinematics, Jacobians, clearance.

Each arm: shoulder yaw (z), shoulder pitch (y), elbow pitch (y), wrist roll
(x), wrist pitch (y), hand roll (x).  Links extend along the local x axis.
The hand frame sits at the pincer's pad centre with x = approach direction,
y = closing axis, z = x cross y.  The two pincer jaws sit at +/- the
aperture offset along y and reach back along -x to the palm.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from ..geometry import Pose, matrix_to_quat

ARMS = ("handL", "handR")
N_JOINTS = 6

_AXES = ("z", "y", "y", "x", "y", "x")
_UNIT = {"x": np.array([1.0, 0, 0]), "y": np.array([0, 1.0, 0]), "z": np.array([0, 0, 1.0])}


def _rot(axis: str, a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    if axis == "x":
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    if axis == "y":
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


@dataclass(frozen=True)
class ArmModel:
    shoulder: Tuple[float, float, float]
    yaw_offset: float = np.pi / 2          # base x axis points along world +y
    upper: float = 0.30
    fore: float = 0.25
    hand: float = 0.12                     # wrist centre to pad centre
    finger: float = 0.05                   # palm to pad centre
    lower: Tuple[float, ...] = (-2.6,) * 6
    upper_limit: Tuple[float, ...] = (2.6,) * 6
    neutral: Tuple[float, ...] = (0.0, -1.0, 2.2, 0.0, 0.3708, 0.0)

    @property
    def bounds(self) -> List[Tuple[float, float]]:
        return list(zip(self.lower, self.upper_limit))


@dataclass(frozen=True)
class RobotModel:
    """Twelve joints: six per arm, left arm first."""

    arms: Tuple[ArmModel, ArmModel]
    link_samples: int = 6

    @classmethod
    def default(cls, spot2_x: float = 0.0, base_offset: float = 0.40, shoulder_half_width: float = 0.15,
                shoulder_height: float = 0.25, upper: float = 0.30, fore: float = 0.25,
                joint_limit: float = 2.6) -> "RobotModel":
        lim = (-joint_limit,) * 6, (joint_limit,) * 6
        left = ArmModel((spot2_x - shoulder_half_width, -base_offset, shoulder_height),
                        upper=upper, fore=fore, lower=lim[0], upper_limit=lim[1])
        right = ArmModel((spot2_x + shoulder_half_width, -base_offset, shoulder_height),
                         upper=upper, fore=fore, lower=lim[0], upper_limit=lim[1])
        return cls((left, right))

    def arm(self, name: str) -> ArmModel:
        return self.arms[ARMS.index(name)]

    @property
    def neutral(self) -> np.ndarray:
        return np.r_[self.arms[0].neutral, self.arms[1].neutral]

    @property
    def n_dof(self) -> int:
        return 2 * N_JOINTS


@dataclass
class Kinematics:
    """Frames of one arm at a configuration."""

    origins: np.ndarray        # (6, 3) joint origins
    axes: np.ndarray           # (6, 3) joint axes in world
    points: np.ndarray         # (K, 3) skeleton sample points
    point_joint: np.ndarray    # (K,) number of joints upstream of each point
    hand_pos: np.ndarray
    hand_rot: np.ndarray


def arm_fk(arm: ArmModel, q: Sequence[float], aperture: float = 0.0, samples: int = 6) -> Kinematics:
    R = _rot("z", arm.yaw_offset)
    p = np.asarray(arm.shoulder, float)
    origins, axes = np.zeros((6, 3)), np.zeros((6, 3))
    pts, owner = [], []

    def segment(a, b, k, n):
        for t in np.linspace(0.0, 1.0, n):
            pts.append(a + t * (b - a))
            owner.append(k)

    for j in range(2):
        origins[j] = p
        axes[j] = R @ _UNIT[_AXES[j]]
        R = R @ _rot(_AXES[j], q[j])
    elbow = p + R @ np.array([arm.upper, 0, 0])
    segment(p, elbow, 2, samples)
    origins[2] = elbow
    axes[2] = R @ _UNIT["y"]
    R = R @ _rot("y", q[2])
    wrist = elbow + R @ np.array([arm.fore, 0, 0])
    segment(elbow, wrist, 3, samples)
    for j in range(3, 6):
        origins[j] = wrist
        axes[j] = R @ _UNIT[_AXES[j]]
        R = R @ _rot(_AXES[j], q[j])
    pad = wrist + R @ np.array([arm.hand, 0, 0])
    palm = pad - R[:, 0] * arm.finger
    segment(wrist, palm, 6, max(2, samples // 2))
    if aperture > 0:
        for sgn in (-1.0, 1.0):
            off = sgn * aperture * R[:, 1]
            segment(palm + off, pad + off, 6, 3)
    return Kinematics(origins, axes, np.array(pts), np.array(owner), pad, R)


def hand_pose(robot: RobotModel, arm_name: str, q: Sequence[float]) -> Pose:
    kin = arm_fk(robot.arm(arm_name), q)
    return Pose(tuple(float(c) for c in kin.hand_pos), matrix_to_quat(kin.hand_rot))


def point_jacobian(kin: Kinematics, point: np.ndarray, n_upstream: int) -> np.ndarray:
    """d point / d q (3 x 6) for a point rigidly attached after ``n_upstream`` joints."""
    J = np.zeros((3, N_JOINTS))
    for j in range(n_upstream):
        J[:, j] = np.cross(kin.axes[j], point - kin.origins[j])
    return J


def points_jacobian(kin: Kinematics) -> np.ndarray:
    """Stacked point Jacobians (K x 3 x 6) for every skeleton sample."""
    diff = kin.points[:, None, :] - kin.origins[None, :, :]            # K x 6 x 3
    J = np.cross(kin.axes[None, :, :], diff)                           # K x 6 x 3
    mask = np.arange(N_JOINTS)[None, :] < kin.point_joint[:, None]
    J = J * mask[:, :, None]
    return np.transpose(J, (0, 2, 1))


def box_distance(points: np.ndarray, pose_pos: np.ndarray, pose_rot: np.ndarray, half: np.ndarray):
    """Signed distance from points to an oriented box and its gradient."""
    local = (points - pose_pos) @ pose_rot
    a = np.abs(local)
    excess = a - half
    outside = np.maximum(excess, 0.0)
    d_out = np.linalg.norm(outside, axis=1)
    grad_local = np.zeros_like(local)
    inside = d_out <= 0
    with np.errstate(invalid="ignore", divide="ignore"):
        grad_local[~inside] = outside[~inside] / d_out[~inside, None]
    d = d_out.copy()
    if inside.any():
        k = np.argmax(excess[inside], axis=1)
        d[inside] = excess[inside][np.arange(k.size), k]
        g = np.zeros((k.size, 3))
        g[np.arange(k.size), k] = 1.0
        grad_local[inside] = g
    grad_local *= np.sign(local) + (local == 0)
    return d, grad_local @ pose_rot.T


def arm_segments(arm: ArmModel, q: Sequence[float], aperture: float = 0.0) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Skeleton of one arm as line segments: upper arm, forearm, hand and jaws."""
    kin = arm_fk(arm, q, aperture, samples=2)
    shoulder, elbow, wrist = kin.origins[0], kin.origins[2], kin.origins[3]
    pad, R = kin.hand_pos, kin.hand_rot
    palm = pad - R[:, 0] * arm.finger
    segs = [(shoulder, elbow), (elbow, wrist), (wrist, palm)]
    if aperture > 0:
        for sgn in (-1.0, 1.0):
            off = sgn * aperture * R[:, 1]
            segs.append((palm + off, pad + off))
            segs.append((palm, palm + off))
    return segs


def segment_distance(p1: np.ndarray, q1: np.ndarray, p2: np.ndarray, q2: np.ndarray) -> float:
    """Closest distance between segments p1-q1 and p2-q2."""
    d1, d2, r = q1 - p1, q2 - p2, p1 - p2
    a, e, f = d1 @ d1, d2 @ d2, d2 @ r
    eps = 1e-15
    if a <= eps and e <= eps:
        return float(np.linalg.norm(r))
    if a <= eps:
        s, t = 0.0, np.clip(f / e, 0.0, 1.0)
    else:
        c = d1 @ r
        if e <= eps:
            s, t = np.clip(-c / a, 0.0, 1.0), 0.0
        else:
            b = d1 @ d2
            den = a * e - b * b
            s = np.clip((b * f - c * e) / den, 0.0, 1.0) if den > eps else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                s, t = np.clip(-c / a, 0.0, 1.0), 0.0
            elif t > 1.0:
                s, t = np.clip((b - c) / a, 0.0, 1.0), 1.0
    return float(np.linalg.norm((p1 + s * d1) - (p2 + t * d2)))


def arms_distance(robot: RobotModel, q: Sequence[float], apertures: Sequence[float] = (0.0, 0.0)) -> float:
    """Smallest distance between the two arms' skeletons at a 12-vector."""
    q = np.asarray(q, float)
    left = arm_segments(robot.arms[0], q[:N_JOINTS], apertures[0])
    right = arm_segments(robot.arms[1], q[N_JOINTS:], apertures[1])
    return min(segment_distance(a, b, c, d) for a, b in left for c, d in right)
