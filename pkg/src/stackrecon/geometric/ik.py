"""Keyframe inverse kinematics by augmented Lagrangian.

Objective: squared deviation from the neutral posture.  Equalities: hand
position and orientation (rotation-matrix difference, which keeps every
residual smooth with an exact gradient).  Inequalities: each skeleton sample
point keeps ``clearance`` from every obstacle box and from the table.  Joint
limits are box bounds.  Every start is deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from ..geometry import Pose
from .robot import (N_JOINTS, ArmModel, RobotModel, _rot, arm_fk, arms_distance, box_distance, point_jacobian,
                    points_jacobian)

POS_SCALE = 100.0      # residual units: centimetres
CLEAR_SCALE = 100.0


@dataclass(frozen=True)
class SolverSettings:
    initial_weight: float = 10.0
    growth: float = 10.0
    outer_iterations: int = 5
    inner_tolerance: float = 1e-8
    clearance: float = 0.005
    position_tolerance: float = 0.001
    angle_tolerance_deg: float = 1.0
    max_inner: int = 200


@dataclass(frozen=True)
class Obstacle:
    position: Tuple[float, float, float]
    rotation: Tuple[float, ...]            # row-major 3x3
    half: Tuple[float, float, float]

    @classmethod
    def from_pose(cls, pose: Pose, half) -> "Obstacle":
        r = pose.rotation
        return cls(tuple(round(float(c), 9) for c in pose.position),
                   tuple(round(float(c), 9) for c in r.ravel()),
                   tuple(round(float(c), 9) for c in half))


@dataclass(frozen=True)
class HandTarget:
    position: Tuple[float, float, float]
    rotation: Tuple[float, ...]            # row-major 3x3
    aperture: float = 0.031

    @classmethod
    def from_pose(cls, pose: Pose, aperture: float) -> "HandTarget":
        return cls(tuple(round(float(c), 9) for c in pose.position),
                   tuple(round(float(c), 9) for c in pose.rotation.ravel()), round(float(aperture), 9))

    @property
    def R(self) -> np.ndarray:
        return np.array(self.rotation).reshape(3, 3)


@dataclass
class ArmSolution:
    q: np.ndarray
    feasible: bool
    reason: str = ""


class ArmProblem:
    """Residuals and merit function for one arm; used by the solver and the tests."""

    def __init__(self, arm: ArmModel, target: Optional[HandTarget], obstacles: Sequence[Obstacle],
                 settings: SolverSettings = SolverSettings(), samples: int = 6):
        self.arm = arm
        self.target = target
        self.settings = settings
        self.samples = samples
        self.q0 = np.asarray(arm.neutral, float)
        self.obs = [(np.array(o.position), np.array(o.rotation).reshape(3, 3), np.array(o.half))
                    for o in obstacles]
        self.aperture = target.aperture if target else 0.0

    # equality residuals h(q) and Jacobian
    def equality(self, q) -> Tuple[np.ndarray, np.ndarray]:
        kin = arm_fk(self.arm, q, self.aperture, self.samples)
        t = self.target
        h_pos = (kin.hand_pos - np.array(t.position)) * POS_SCALE
        J_pos = point_jacobian(kin, kin.hand_pos, N_JOINTS) * POS_SCALE
        h_rot = (kin.hand_rot - t.R).ravel()
        J_rot = np.zeros((9, N_JOINTS))
        for j in range(N_JOINTS):
            w = kin.axes[j]
            S = np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])
            J_rot[:, j] = (S @ kin.hand_rot).ravel()
        return np.r_[h_pos, h_rot], np.vstack([J_pos, J_rot])

    # inequality g(q) >= 0 and Jacobian
    def inequality(self, q) -> Tuple[np.ndarray, np.ndarray]:
        kin = arm_fk(self.arm, q, self.aperture, self.samples)
        c = self.settings.clearance
        pts = kin.points
        gs, Js = [], []
        Jp = points_jacobian(kin)
        # table surface
        gs.append((pts[:, 2] - c) * CLEAR_SCALE)
        Js.append(Jp[:, 2, :] * CLEAR_SCALE)
        for pos, rot, half in self.obs:
            d, grad = box_distance(pts, pos, rot, half)
            gs.append((d - c) * CLEAR_SCALE)
            Js.append(np.einsum("ki,kij->kj", grad, Jp) * CLEAR_SCALE)
        return np.concatenate(gs), np.vstack(Js)

    def objective(self, q) -> Tuple[float, np.ndarray]:
        d = np.asarray(q) - self.q0
        return float(d @ d), 2.0 * d

    def merit(self, q, lam, nu, mu) -> Tuple[float, np.ndarray]:
        f, gf = self.objective(q)
        if self.target is not None:
            h, Jh = self.equality(q)
            f += lam @ h + 0.5 * mu * (h @ h)
            gf = gf + Jh.T @ (lam + mu * h)
        g, Jg = self.inequality(q)
        s = np.maximum(0.0, nu - mu * g)
        f += (s @ s - nu @ nu) / (2.0 * mu)
        gf = gf - Jg.T @ s
        return f, gf

    def violations(self, q) -> List[str]:
        out = []
        arm = self.arm
        if np.any(q < np.array(arm.lower) - 1e-9) or np.any(q > np.array(arm.upper_limit) + 1e-9):
            out.append("joint limits")
        if self.target is not None:
            kin = arm_fk(arm, q, self.aperture, self.samples)
            if np.linalg.norm(kin.hand_pos - np.array(self.target.position)) > self.settings.position_tolerance:
                out.append("hand position")
            c = np.clip((np.trace(kin.hand_rot.T @ self.target.R) - 1) / 2, -1, 1)
            if np.degrees(np.arccos(c)) > self.settings.angle_tolerance_deg:
                out.append("hand orientation")
        g, _ = self.inequality(q)
        if g.min() < -1e-6:
            out.append("clearance")
        return out


def analytic_branches(arm: ArmModel, target: HandTarget) -> List[np.ndarray]:
    """Closed-form joint solutions (elbow up/down x wrist flip) within limits.

    The three wrist joints intersect, so the wrist centre fixes yaw, shoulder
    and elbow pitch; the wrist then realises the remaining X-Y-X rotation.
    """
    Rt = target.R
    wc = np.array(target.position) - arm.hand * Rt[:, 0]
    c0, s0 = np.cos(arm.yaw_offset), np.sin(arm.yaw_offset)
    R0 = np.array([[c0, -s0, 0], [s0, c0, 0], [0, 0, 1]])
    w = R0.T @ (wc - np.array(arm.shoulder))
    q1 = np.arctan2(w[1], w[0])
    r, z = np.hypot(w[0], w[1]), w[2]
    L1, L2 = arm.upper, arm.fore
    c2 = (r * r + z * z - L1 * L1 - L2 * L2) / (2 * L1 * L2)
    if abs(c2) > 1.0:
        return []
    lo, hi = np.array(arm.lower), np.array(arm.upper_limit)
    out = []
    for t2 in (-np.arccos(c2), np.arccos(c2)):
        t1 = np.arctan2(z, r) - np.arctan2(L2 * np.sin(t2), L1 + L2 * np.cos(t2))
        q2, q3 = -t1, -t2
        R3 = R0 @ _rot("z", q1) @ _rot("y", q2 + q3)
        M = R3.T @ Rt
        b = np.arccos(np.clip(M[0, 0], -1.0, 1.0))
        for sb in (1.0, -1.0):
            if abs(np.sin(b)) < 1e-9:
                a, c = 0.0, np.arctan2(-M[1, 2], M[1, 1])
            else:
                a = np.arctan2(sb * M[1, 0], -sb * M[2, 0])
                c = np.arctan2(sb * M[0, 1], sb * M[0, 2])
            q = np.array([q1, q2, q3, a, sb * b, c])
            q = (q + np.pi) % (2 * np.pi) - np.pi
            if np.all(q >= lo - 1e-12) and np.all(q <= hi + 1e-12):
                out.append(np.clip(q, lo, hi))
    return out


def _augmented_lagrangian(prob: ArmProblem, q_init: np.ndarray) -> np.ndarray:
    st = prob.settings
    q = q_init.copy()
    n_eq = 12 if prob.target is not None else 0
    lam = np.zeros(n_eq)
    if n_eq:
        # least-squares multiplier estimate: the start is then stationary
        # whenever it already satisfies the equalities
        _, Jh = prob.equality(q)
        lam = -np.linalg.lstsq(Jh.T, prob.objective(q)[1], rcond=None)[0]
    nu = np.zeros(len(prob.inequality(q)[0]))
    mu = st.initial_weight
    for _ in range(st.outer_iterations):
        r = minimize(prob.merit, q, args=(lam, nu, mu), jac=True, method="L-BFGS-B",
                     bounds=prob.arm.bounds, options={"ftol": st.inner_tolerance, "gtol": 1e-10,
                                                      "maxiter": st.max_inner})
        step = np.abs(r.x - q).max()
        q = r.x
        if step < 1e-12:
            break
        if n_eq:
            lam = lam + mu * prob.equality(q)[0]
        nu = np.maximum(0.0, nu - mu * prob.inequality(q)[0])
        mu *= st.growth
    return q


def solve_arm(arm: ArmModel, target: Optional[HandTarget], obstacles: Sequence[Obstacle],
              settings: SolverSettings = SolverSettings()) -> ArmSolution:
    prob = ArmProblem(arm, target, obstacles, settings)
    if target is None:
        q = prob.q0.copy()
        bad = prob.violations(q)
        return ArmSolution(q, not bad, ", ".join(bad))
    far = np.linalg.norm(np.array(target.position) - np.array(arm.shoulder))
    if far > arm.upper + arm.fore + arm.hand + 1e-6:
        return ArmSolution(prob.q0.copy(), False, "hand position (out of reach)")
    branches = analytic_branches(arm, target)
    if not branches:
        wc = np.array(target.position) - arm.hand * target.R[:, 0]
        d = np.linalg.norm(wc - np.array(arm.shoulder))
        inside = abs(arm.upper - arm.fore) <= d <= arm.upper + arm.fore
        return ArmSolution(prob.q0.copy(), False, "joint limits" if inside else "hand position (out of reach)")
    scored = []
    for q in branches:
        bad = prob.violations(q)
        scored.append((len(bad) > 0, prob.objective(q)[0], tuple(q), bad))
    scored.sort(key=lambda r: r[:3])
    infeasible, _, q_init, bad = scored[0]
    q_init = np.array(q_init)
    if infeasible:
        return ArmSolution(q_init, False, ", ".join(bad))
    q = _augmented_lagrangian(prob, q_init)
    if prob.violations(q) or prob.objective(q)[0] > prob.objective(q_init)[0]:
        q = q_init
    return ArmSolution(q, True, "")


def solve_keyframe(robot: RobotModel, targets: Sequence[Optional[HandTarget]],
                   obstacles: Sequence[Sequence[Obstacle]],
                   settings: SolverSettings = SolverSettings()) -> Tuple[Optional[np.ndarray], str]:
    """Solve both arms; ``targets`` and ``obstacles`` are per arm (left, right).

    Arms are solved independently, then the pair must keep ``clearance``
    between their skeletons.  Returns the 12-vector, or None with the first
    violated constraint named.
    """
    qs = []
    for k, arm in enumerate(robot.arms):
        sol = _solve_cached(arm, targets[k], tuple(obstacles[k]), settings)
        if not sol.feasible:
            side = "left" if k == 0 else "right"
            return None, f"{side} arm: {sol.reason}"
        qs.append(sol.q)
    q = np.concatenate(qs)
    apertures = [t.aperture if t is not None else 0.0 for t in targets]
    gap = arms_distance(robot, q, apertures)
    if gap < settings.clearance:
        return None, f"arm clearance ({gap * 1000:.1f} mm between the arms)"
    return q, ""


_CACHE: dict = {}


def _solve_cached(arm, target, obstacles, settings) -> ArmSolution:
    key = (arm, target, obstacles, settings)
    if key not in _CACHE:
        _CACHE[key] = solve_arm(arm, target, obstacles, settings)
    sol = _CACHE[key]
    return ArmSolution(sol.q.copy(), sol.feasible, sol.reason)
