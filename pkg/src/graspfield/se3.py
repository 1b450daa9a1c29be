"""Pose representations, quaternion algebra, workspace clipping and pose-set expansion.

Quaternions are stored as (w, x, y, z) float64 arrays. Gradients elsewhere in
the package act on the raw 4-vector; normalization happens only in
``post_process`` (update-then-fix order).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

QUAT_NORM_EPS = 1e-12


class DegenerateQuaternionError(ValueError):
    """Raised when a quaternion is too close to zero to define a rotation."""


def _as_vec(v, n: int) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.shape != (n,):
        raise ValueError(f"expected shape ({n},), got {a.shape}")
    return a


def normalize_quaternion(q) -> np.ndarray:
    """Return q scaled to unit norm. Raises DegenerateQuaternionError near zero."""
    q = _as_vec(q, 4)
    norm = float(np.linalg.norm(q))
    if norm <= QUAT_NORM_EPS:
        raise DegenerateQuaternionError(
            f"quaternion norm {norm:.3e} too small; optimizer state is invalid"
        )
    return q / norm


def quat_multiply(a, b) -> np.ndarray:
    """Hamilton product a*b (wxyz)."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q) -> np.ndarray:
    q = _as_vec(q, 4)
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = _as_vec(axis, 3)
    n = np.linalg.norm(axis)
    if n <= QUAT_NORM_EPS:
        raise ValueError("rotation axis must be nonzero")
    axis = axis / n
    half = 0.5 * angle
    return np.concatenate([[math.cos(half)], math.sin(half) * axis])


def quat_to_matrix(q) -> np.ndarray:
    """Rotation matrix of a unit quaternion."""
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(m) -> np.ndarray:
    """Unit quaternion of a rotation matrix (Shepperd's method)."""
    m = np.asarray(m, dtype=np.float64)
    t = np.trace(m)
    if t > 0:
        s = math.sqrt(t + 1.0) * 2
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        )
    elif m[1, 1] >= m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = np.array(
            [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        )
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = np.array(
            [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        )
    return normalize_quaternion(q)


def quat_rotate(q, v) -> np.ndarray:
    """Rotate vector v by unit quaternion q."""
    return quat_to_matrix(q) @ _as_vec(v, 3)


def rotation_distance(a, b) -> float:
    """Geodesic angle between two rotations, in [0, pi]; handles the q/-q double cover."""
    d = abs(float(np.dot(_as_vec(a, 4), _as_vec(b, 4))))
    return 2.0 * math.acos(min(1.0, d))


def random_quaternion(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation (normalized 4-D Gaussian)."""
    while True:
        q = rng.standard_normal(4)
        n = np.linalg.norm(q)
        if n > 1e-6:
            return q / n


@dataclass(frozen=True)
class Workspace:
    """Axis-aligned position bounds, meters."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "min", _as_vec(self.min, 3))
        object.__setattr__(self, "max", _as_vec(self.max, 3))
        if np.any(self.min > self.max):
            raise ValueError("workspace min must be <= max componentwise")

    def contains(self, pos, atol: float = 0.0) -> bool:
        pos = _as_vec(pos, 3)
        return bool(np.all(pos >= self.min - atol) and np.all(pos <= self.max + atol))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min + self.max)

    @property
    def extent(self) -> np.ndarray:
        return self.max - self.min


@dataclass(frozen=True)
class Pose6:
    """6-DoF pose: position (m) and orientation quaternion (wxyz)."""

    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", _as_vec(self.position, 3))
        object.__setattr__(self, "orientation", _as_vec(self.orientation, 4))

    @staticmethod
    def identity() -> "Pose6":
        return Pose6(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))

    def as_vec7(self) -> np.ndarray:
        return np.concatenate([self.position, self.orientation])

    @staticmethod
    def from_vec7(v) -> "Pose6":
        v = _as_vec(v, 7)
        return Pose6(v[:3], v[3:])

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    def transform_point(self, p) -> np.ndarray:
        return self.position + self.rotation_matrix() @ _as_vec(p, 3)


def clip_position(pos, ws: Workspace) -> np.ndarray:
    """Componentwise clamp of pos into the workspace."""
    return np.clip(_as_vec(pos, 3), ws.min, ws.max)


def post_process(p: Pose6, ws: Workspace) -> Pose6:
    """Repair a pose after a gradient step: clip position, normalize orientation."""
    return Pose6(clip_position(p.position, ws), normalize_quaternion(p.orientation))


@dataclass(frozen=True)
class PoseSet5:
    """Position/direction pairs around the TCP.

    ``frame`` is the TCP rotation that produced the entries; feature extraction
    expresses offsets in this frame so features are rigid-motion invariant.
    """

    positions: np.ndarray  # (N, 3)
    directions: np.ndarray  # (N, 3), unit
    frame: np.ndarray = field(default_factory=lambda: np.eye(3))  # (3, 3)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        dirs = np.asarray(self.directions, dtype=np.float64)
        frm = np.asarray(self.frame, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape != dirs.shape:
            raise ValueError("positions and directions must both be (N, 3)")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "directions", dirs)
        object.__setattr__(self, "frame", frm)

    def __len__(self) -> int:
        return self.positions.shape[0]


# Fixed 14-entry template in the TCP frame. It combines two groups:
#   * the 8 corners of a cube of half-edge 0.04 m, directions pointing from
#     each corner toward the TCP, plus the TCP origin pointing along the
#     approach axis (+z) — an isotropic probe of the local geometry;
#   * 5 gripper-shaped entries (fingertips at half the 0.085 m opening, finger
#     bases, wrist) whose inward/approach directions make the features
#     strongly orientation-sensitive, so the value landscape decays smoothly
#     as the gripper tilts away from a feasible grasp.
TEMPLATE_HALF_EDGE = 0.04
TEMPLATE_FINGER_HALF_SPAN = 0.0425


def default_template() -> PoseSet5:
    h = TEMPLATE_HALF_EDGE
    w = TEMPLATE_FINGER_HALF_SPAN
    corners = np.array(
        [[sx * h, sy * h, sz * h] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
    )
    grip_pos = np.array(
        [[+w, 0.0, 0.0], [-w, 0.0, 0.0], [+w, 0.0, -0.04], [-w, 0.0, -0.04], [0.0, 0.0, -0.08]]
    )
    grip_dir = np.array(
        [[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]
    )
    positions = np.vstack([np.zeros(3), corners, grip_pos])
    directions = np.vstack(
        [
            np.array([0.0, 0.0, 1.0]),
            -corners / np.linalg.norm(corners, axis=1, keepdims=True),
            grip_dir,
        ]
    )
    return PoseSet5(positions, directions)


def compute_pose_set(p: Pose6, template: PoseSet5) -> PoseSet5:
    """Rigidly transform a TCP-frame template by pose p."""
    r = quat_to_matrix(normalize_quaternion(p.orientation))
    return PoseSet5(
        positions=p.position + template.positions @ r.T,
        directions=template.directions @ r.T,
        frame=r @ template.frame,
    )
