"""Small rigid-transform toolkit: quaternions are (w, x, y, z), z is up."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection

Vec3 = Tuple[float, float, float]
Quat = Tuple[float, float, float, float]

IDENTITY_QUAT: Quat = (1.0, 0.0, 0.0, 0.0)


def quat_normalize(q: Sequence[float]) -> Quat:
    n = math.sqrt(sum(c * c for c in q))
    if n == 0.0:
        raise ValueError("zero quaternion")
    return (q[0] / n, q[1] / n, q[2] / n, q[3] / n)


def quat_mul(a: Sequence[float], b: Sequence[float]) -> Quat:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def quat_conj(q: Sequence[float]) -> Quat:
    return (q[0], -q[1], -q[2], -q[3])


def quat_from_axis_angle(axis: Sequence[float], angle: float) -> Quat:
    ax = np.asarray(axis, dtype=float)
    ax = ax / np.linalg.norm(ax)
    s = math.sin(angle / 2.0)
    return (math.cos(angle / 2.0), ax[0] * s, ax[1] * s, ax[2] * s)


def quat_to_matrix(q: Sequence[float]) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(m: np.ndarray) -> Quat:
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2
        q = (0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s)
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = ((m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s)
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = ((m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s)
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = ((m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s)
    q = quat_normalize(q)
    # canonical hemisphere keeps serialization stable
    if q[0] < 0:
        q = (-q[0], -q[1], -q[2], -q[3])
    return q


def quat_angle(a: Sequence[float], b: Sequence[float]) -> float:
    """Rotation angle (radians) between two orientations."""
    d = abs(sum(x * y for x, y in zip(a, b)))
    return 2.0 * math.acos(min(1.0, d))


@dataclass(frozen=True)
class Pose:
    position: Vec3 = (0.0, 0.0, 0.0)
    orientation: Quat = IDENTITY_QUAT

    def __post_init__(self):
        n = math.sqrt(sum(c * c for c in self.orientation))
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"orientation is not a unit quaternion (norm {n:.12g})")

    @classmethod
    def make(cls, position, orientation=IDENTITY_QUAT) -> "Pose":
        return cls(tuple(float(c) for c in position), quat_normalize(orientation))

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    def compose(self, child: "Pose") -> "Pose":
        """World pose of ``child`` given as relative to this pose."""
        p = np.asarray(self.position) + self.rotation @ np.asarray(child.position)
        q = quat_normalize(quat_mul(self.orientation, child.orientation))
        return Pose(tuple(float(c) for c in p), q)

    def inverse(self) -> "Pose":
        qi = quat_conj(self.orientation)
        p = -(quat_to_matrix(qi) @ np.asarray(self.position))
        return Pose(tuple(float(c) for c in p), qi)

    def relative_to(self, parent: "Pose") -> "Pose":
        return parent.inverse().compose(self)

    def transform(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.rotation.T + np.asarray(self.position)


def box_corners(pose: Pose, half: np.ndarray) -> np.ndarray:
    signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], float)
    return pose.transform(signs * half)


def box_halfspaces(pose: Pose, half: np.ndarray) -> np.ndarray:
    """Rows [a, b] with a.x + b <= 0 describing the box."""
    r = pose.rotation
    c = np.asarray(pose.position)
    rows = []
    for k in range(3):
        n = r[:, k]
        rows.append(np.r_[n, -(n @ c) - half[k]])
        rows.append(np.r_[-n, (n @ c) - half[k]])
    return np.array(rows)


def box_overlap_volume(pose_a: Pose, half_a, pose_b: Pose, half_b) -> float:
    """Exact intersection volume of two oriented boxes."""
    hs = np.vstack([box_halfspaces(pose_a, np.asarray(half_a)), box_halfspaces(pose_b, np.asarray(half_b))])
    a, b = hs[:, :3], hs[:, 3]
    norms = np.linalg.norm(a, axis=1)
    # Chebyshev centre: maximise r s.t. a.x + r|a| <= -b
    res = linprog(
        c=[0, 0, 0, -1],
        A_ub=np.c_[a, norms],
        b_ub=-b,
        bounds=[(None, None)] * 3 + [(0, None)],
        method="highs",
    )
    if res.status != 0 or res.x[3] < 1e-7:
        return 0.0
    interior = res.x[:3]
    inter = HalfspaceIntersection(hs, interior)
    return float(ConvexHull(inter.intersections).volume)


def vertical_extent(pose: Pose, half: np.ndarray, xy: np.ndarray):
    """Lower/upper z where vertical lines through ``xy`` (N x 2) cross the box.

    Lines that miss the box get nan.
    """
    r = pose.rotation
    c = np.asarray(pose.position)
    xy = np.atleast_2d(xy)
    n = len(xy)
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    for k in range(3):
        axis = r[:, k]
        u = (xy[:, 0] - c[0]) * axis[0] + (xy[:, 1] - c[1]) * axis[1] - c[2] * axis[2]
        v = axis[2]
        if abs(v) < 1e-12:
            miss = np.abs(u) > half[k]
            lo[miss] = np.inf
            continue
        t1 = (-half[k] - u) / v
        t2 = (half[k] - u) / v
        lo = np.maximum(lo, np.minimum(t1, t2))
        hi = np.minimum(hi, np.maximum(t1, t2))
    miss = lo > hi
    lo[miss] = np.nan
    hi[miss] = np.nan
    return lo, hi
