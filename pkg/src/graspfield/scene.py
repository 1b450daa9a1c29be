"""Procedural prismatic scenes, valid-grasp families, the grasp oracle and a
simplified grasp-outcome simulator.

Objects are upright prisms resting on the ground plane (object frame origin at
the base center). Valid grasps are continuous families: an anchor pose in the
object frame, a sliding interval along one axis, and discrete 180-degree
flips. The oracle projects a query pose onto these families in closed form.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .se3 import (
    Pose6,
    Workspace,
    normalize_quaternion,
    quat_from_axis_angle,
    quat_multiply,
    quat_to_matrix,
    matrix_to_quat,
    rotation_distance,
)

# Simulated Robotiq 2F-85 gripper.
GRIPPER_OPENING = 0.085
GRASP_DEPTH = 0.02  # TCP depth into the object from the approach face
SLIDE_MARGIN = 0.01  # keep fingers away from object ends
JUNCTION_CLEARANCE = 0.015  # finger clearance around the T junction

# Error normalization: makes the averaged translation/rotation error
# dimensionless and O(1) over the workspace.
T_SCALE = 0.10
R_SCALE = math.pi / 2

# Success tolerances (within-tolerance AND clear approach => success).
T_TOL = 0.010
R_TOL = math.radians(15.0)

COLLISION_SHIFT_MAX = 0.03
COLLISION_YAW_MAX = math.radians(15.0)

DEFAULT_WORKSPACE = Workspace(np.array([-0.28, -0.28, 0.0]), np.array([0.28, 0.28, 0.22]))

SIMPLE_MIN_SEPARATION = 0.12
CLUTTER_MAX_PENETRATION = 0.001

_EX = np.array([1.0, 0.0, 0.0])
_EY = np.array([0.0, 1.0, 0.0])
_EZ = np.array([0.0, 0.0, 1.0])


class SceneGenerationError(RuntimeError):
    """Placement failed after bounded rejection sampling; retry with a new seed."""


class NoGraspableObjectError(RuntimeError):
    """The scene contains no object with a valid grasp family."""


@dataclass(frozen=True)
class PrismObject:
    """An upright prism: a box (dims lx, ly, lz) or a T-shape
    (dims arm_length, arm_width, stem_length, stem_width, height)."""

    shape: str  # "box" | "t_shape"
    dims: tuple
    pose: Pose6
    color_tag: int = 0

    def __post_init__(self):
        dims = tuple(float(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        expected = {"box": 3, "t_shape": 5}
        if self.shape not in expected:
            raise ValueError(f"unknown shape {self.shape!r}")
        if len(dims) != expected[self.shape]:
            raise ValueError(f"{self.shape} needs {expected[self.shape]} dims, got {len(dims)}")
        if any(d <= 0 for d in dims):
            raise ValueError("all dimensions must be strictly positive")

    @property
    def height(self) -> float:
        return self.dims[2] if self.shape == "box" else self.dims[4]

    def component_boxes(self) -> list:
        """Component boxes as (local_center, half_dims) in the object frame
        (origin at the base center, z up)."""
        if self.shape == "box":
            lx, ly, lz = self.dims
            return [(np.array([0.0, 0.0, lz / 2]), np.array([lx / 2, ly / 2, lz / 2]))]
        al, aw, sl, sw, h = self.dims
        return [
            (np.array([0.0, 0.0, h / 2]), np.array([aw / 2, al / 2, h / 2])),
            (np.array([aw / 2 + sl / 2, 0.0, h / 2]), np.array([sl / 2, sw / 2, h / 2])),
        ]

    def center(self) -> np.ndarray:
        """Mid-height reference point in world frame."""
        return self.pose.transform_point(np.array([0.0, 0.0, self.height / 2]))

    def footprint_radius(self) -> float:
        r = 0.0
        for c, h in self.component_boxes():
            r = max(r, float(np.hypot(*(np.abs(c[:2]) + h[:2]))))
        return r


@dataclass(frozen=True)
class Scene:
    """Immutable set of placed objects plus workspace bounds."""

    objects: tuple
    workspace: Workspace
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))


@dataclass(frozen=True)
class GraspOutcome:
    kind: str  # "success" | "miss" | "collision" | "dropped"
    object_index: Optional[int] = None

    def __post_init__(self):
        if self.kind in ("success", "collision") and self.object_index is None:
            raise ValueError(f"{self.kind} outcome requires an object_index")
        if self.kind == "miss" and self.object_index is not None:
            raise ValueError("miss outcome carries no object_index")


@dataclass(frozen=True)
class GraspFamily:
    """Continuous family of valid grasps in the object frame: anchor position,
    sliding interval [lo, hi] along a unit axis, and discrete flip quaternions."""

    anchor: np.ndarray  # (3,)
    axis: np.ndarray  # (3,), unit
    lo: float
    hi: float
    orientations: tuple  # tuple of (4,) quaternions


def _top_down_quat(yaw: float) -> np.ndarray:
    # TCP z points down (approach direction), TCP x is the closing axis.
    return quat_multiply(quat_from_axis_angle(_EZ, yaw), quat_from_axis_angle(_EX, math.pi))


def _side_quat(approach: np.ndarray, closing: np.ndarray) -> np.ndarray:
    m = np.column_stack([closing, np.cross(approach, closing), approach])
    return matrix_to_quat(m)


def _interval(lo: float, hi: float) -> Optional[tuple]:
    if hi < lo:
        mid = 0.5 * (lo + hi)
        return None if hi < lo - 1e-12 else (mid, mid)
    return (lo, hi)


def object_grasp_families(obj: PrismObject) -> list:
    """Grasp families of a single object, in the object frame."""
    fams = []
    if obj.shape == "box":
        lx, ly, lz = obj.dims
        z_g = max(lz / 2, lz - GRASP_DEPTH)
        # Top-down, fingers closing across ly, sliding along x.
        if ly <= GRIPPER_OPENING:
            hr = max(0.0, lx / 2 - SLIDE_MARGIN)
            fams.append(
                GraspFamily(
                    np.array([0.0, 0.0, z_g]), _EX, -hr, hr,
                    (_top_down_quat(math.pi / 2), _top_down_quat(-math.pi / 2)),
                )
            )
        # Top-down, fingers closing across lx, sliding along y.
        if lx <= GRIPPER_OPENING:
            hr = max(0.0, ly / 2 - SLIDE_MARGIN)
            fams.append(
                GraspFamily(
                    np.array([0.0, 0.0, z_g]), _EY, -hr, hr,
                    (_top_down_quat(0.0), _top_down_quat(math.pi)),
                )
            )
        # Side approaches, sliding vertically.
        hrz = max(0.0, lz / 2 - SLIDE_MARGIN)
        for approach, half_along, closing_dim, closing in (
            (_EX, lx / 2, ly, _EY),
            (-_EX, lx / 2, ly, _EY),
            (_EY, ly / 2, lx, _EX),
            (-_EY, ly / 2, lx, _EX),
        ):
            if closing_dim <= GRIPPER_OPENING:
                depth = min(GRASP_DEPTH, half_along)
                anchor = -approach * (half_along - depth) + np.array([0.0, 0.0, lz / 2])
                fams.append(
                    GraspFamily(
                        anchor, _EZ, -hrz, hrz,
                        (_side_quat(approach, closing), _side_quat(approach, -closing)),
                    )
                )
    else:
        al, aw, sl, sw, h = obj.dims
        z_g = max(h / 2, h - GRASP_DEPTH)
        # Arm families: closing across arm width, sliding along the arm (y),
        # excluding the junction region where a finger would hit the stem.
        if aw <= GRIPPER_OPENING:
            lo = sw / 2 + JUNCTION_CLEARANCE
            hi = al / 2 - SLIDE_MARGIN
            quats = (_top_down_quat(0.0), _top_down_quat(math.pi))
            if hi >= lo:
                fams.append(GraspFamily(np.array([0.0, 0.0, z_g]), _EY, lo, hi, quats))
                fams.append(GraspFamily(np.array([0.0, 0.0, z_g]), _EY, -hi, -lo, quats))
        # Stem family: closing across stem width, sliding along the stem (x).
        if sw <= GRIPPER_OPENING:
            lo = aw / 2 + JUNCTION_CLEARANCE
            hi = aw / 2 + sl - SLIDE_MARGIN
            if hi >= lo:
                fams.append(
                    GraspFamily(
                        np.array([0.0, 0.0, z_g]), _EX, lo, hi,
                        (_top_down_quat(math.pi / 2), _top_down_quat(-math.pi / 2)),
                    )
                )
    return fams


class FamilyTable:
    """All grasp family/flip rows of a scene, transformed to world frame and
    stacked for vectorized closed-form projection."""

    def __init__(self, scene: Scene):
        anchors, axes, los, his, quats, obj_idx = [], [], [], [], [], []
        for i, obj in enumerate(scene.objects):
            r = obj.pose.rotation_matrix()
            for fam in object_grasp_families(obj):
                c = obj.pose.position + r @ fam.anchor
                u = r @ fam.axis
                for q in fam.orientations:
                    anchors.append(c)
                    axes.append(u)
                    los.append(fam.lo)
                    his.append(fam.hi)
                    quats.append(quat_multiply(obj.pose.orientation, q))
                    obj_idx.append(i)
        self.n_rows = len(anchors)
        if self.n_rows:
            self.anchors = np.array(anchors)
            self.axes = np.array(axes)
            self.lo = np.array(los)
            self.hi = np.array(his)
            self.quats = np.array(quats)
            self.object_index = np.array(obj_idx)

    def project(self, positions: np.ndarray, quats: np.ndarray):
        """Closed-form projection of N poses onto every family row.

        Returns (t_err, r_err, combined, row_index, slide) of the per-pose
        best row under the combined error.
        """
        if self.n_rows == 0:
            raise NoGraspableObjectError("scene has no graspable object")
        positions = np.atleast_2d(positions)
        quats = np.atleast_2d(quats)
        d = positions[:, None, :] - self.anchors[None, :, :]  # (N, F, 3)
        s = np.clip(np.einsum("nfk,fk->nf", d, self.axes), self.lo, self.hi)
        t_err = np.linalg.norm(d - s[..., None] * self.axes[None, :, :], axis=-1)
        dot = np.clip(np.abs(quats @ self.quats.T), -1.0, 1.0)
        r_err = 2.0 * np.arccos(dot)
        combined = 0.5 * (t_err / T_SCALE + r_err / R_SCALE)
        best = np.argmin(combined, axis=1)
        rows = np.arange(positions.shape[0])
        return (
            t_err[rows, best],
            r_err[rows, best],
            combined[rows, best],
            best,
            s[rows, best],
        )

    def pose_at(self, row: int, slide: float) -> Pose6:
        return Pose6(self.anchors[row] + slide * self.axes[row], self.quats[row])


def grasp_errors(p: Pose6, scene: Scene):
    """(t_err, r_err) of p relative to the nearest valid grasp."""
    table = FamilyTable(scene)
    t, r, _, _, _ = table.project(p.position, normalize_quaternion(p.orientation))
    return float(t[0]), float(r[0])


def nearest_valid_grasp(p: Pose6, scene: Scene) -> Pose6:
    """The valid grasp minimizing the combined (normalized) error to p."""
    table = FamilyTable(scene)
    _, _, _, rows, s = table.project(p.position, normalize_quaternion(p.orientation))
    return table.pose_at(int(rows[0]), float(s[0]))


def negative_grasp_error(p: Pose6, scene: Scene) -> float:
    """-(t_err/T_SCALE + r_err/R_SCALE)/2 to the nearest valid grasp; 0 iff valid."""
    table = FamilyTable(scene)
    _, _, combined, _, _ = table.project(p.position, normalize_quaternion(p.orientation))
    return -float(combined[0])


def negative_grasp_error_many(positions: np.ndarray, quats: np.ndarray, table: FamilyTable) -> np.ndarray:
    """Vectorized negative grasp error for N (position, unit quaternion) rows."""
    _, _, combined, _, _ = table.project(positions, quats)
    return -combined


def enumerate_valid_grasps(
    scene: Scene, trans_resolution: float = 0.005, rot_resolution: float = math.radians(1.0)
) -> list:
    """Discretize every grasp family at the given sliding resolution.

    Family orientations are a discrete flip set already, so ``rot_resolution``
    only caps nothing here; it is kept so callers can state the rotational
    tolerance of brute-force comparisons against this list.
    """
    if trans_resolution <= 0 or rot_resolution <= 0:
        raise ValueError("resolutions must be positive")
    table = FamilyTable(scene)
    poses = []
    if table.n_rows == 0:
        return poses
    for row in range(table.n_rows):
        lo, hi = table.lo[row], table.hi[row]
        n = int(math.floor((hi - lo) / trans_resolution + 1e-9)) + 1
        for k in range(n):
            poses.append(table.pose_at(row, lo + k * trans_resolution))
    return poses


def demonstrate_grasp(scene: Scene, rng: np.random.Generator) -> Pose6:
    """Scripted demonstrator: a uniform object, then a uniform pose from one of
    its grasp family rows."""
    table = FamilyTable(scene)
    if table.n_rows == 0:
        raise NoGraspableObjectError("no graspable object to demonstrate on")
    graspable = np.unique(table.object_index)
    obj = graspable[rng.integers(len(graspable))]
    rows = np.flatnonzero(table.object_index == obj)
    row = int(rows[rng.integers(len(rows))])
    s = float(rng.uniform(table.lo[row], table.hi[row]))
    return table.pose_at(row, s)


def object_sdf(obj: PrismObject, points: np.ndarray) -> np.ndarray:
    """Signed distance of world points to the object surface (min over
    component boxes)."""
    points = np.atleast_2d(points)
    r = obj.pose.rotation_matrix()
    local = (points - obj.pose.position) @ r
    best = None
    for c, h in obj.component_boxes():
        q = np.abs(local - c) - h
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        d = outside + inside
        best = d if best is None else np.minimum(best, d)
    return best


# Gripper geometry used by the simulator's intersection checks.
_APPROACH_SAMPLES = np.linspace(0.01, 0.25, 25)
_CLOSING_GRID = np.array(
    [
        [x, y, z]
        for x in np.linspace(-GRIPPER_OPENING / 2, GRIPPER_OPENING / 2, 9)
        for y in np.linspace(-0.015, 0.015, 3)
        for z in np.linspace(-0.035, 0.005, 5)
    ]
)


def _first_intersecting(scene: Scene, points: np.ndarray, exclude: Optional[int]) -> Optional[int]:
    for j, obj in enumerate(scene.objects):
        if j == exclude:
            continue
        if np.any(object_sdf(obj, points) < -1e-6):
            return j
    return None


def simulate_grasp(scene: Scene, p: Pose6) -> GraspOutcome:
    """Tolerance + approach model of grasp execution.

    Success iff p is within (T_TOL, R_TOL) of a valid grasp and the straight
    approach along the tool axis is clear of other objects; collision if the
    approach line or the closing region intersects object material otherwise;
    miss in free space. "dropped" is decided by the clutter harness.
    """
    q = normalize_quaternion(p.orientation)
    table = FamilyTable(scene)
    target = None
    within_tol = False
    if table.n_rows:
        t_err, r_err, _, rows, _ = table.project(p.position, q)
        target = int(table.object_index[int(rows[0])])
        within_tol = float(t_err[0]) <= T_TOL and float(r_err[0]) <= R_TOL
    rot = quat_to_matrix(q)
    approach_pts = p.position - np.outer(_APPROACH_SAMPLES, rot @ _EZ)
    if within_tol:
        blocker = _first_intersecting(scene, approach_pts, exclude=target)
        if blocker is None:
            return GraspOutcome("success", target)
        return GraspOutcome("collision", blocker)
    closing_pts = p.position + _CLOSING_GRID @ rot.T
    hit = _first_intersecting(scene, np.vstack([approach_pts, closing_pts]), exclude=None)
    if hit is not None:
        return GraspOutcome("collision", hit)
    return GraspOutcome("miss")


def apply_outcome(scene: Scene, outcome: GraspOutcome, rng: np.random.Generator) -> Scene:
    """Scene update after a grasp attempt: success removes the object,
    collision perturbs the contacted object (removing it if pushed out of the
    workspace), miss leaves the scene unchanged."""
    if outcome.kind in ("miss", "dropped"):
        return scene
    objects = list(scene.objects)
    if outcome.kind == "success":
        del objects[outcome.object_index]
        return replace(scene, objects=tuple(objects))
    # collision: bounded random planar displacement plus a yaw twist
    obj = objects[outcome.object_index]
    angle = rng.uniform(0.0, 2 * math.pi)
    radius = COLLISION_SHIFT_MAX * math.sqrt(rng.uniform())
    dyaw = rng.uniform(-COLLISION_YAW_MAX, COLLISION_YAW_MAX)
    new_pos = obj.pose.position + np.array([radius * math.cos(angle), radius * math.sin(angle), 0.0])
    new_quat = quat_multiply(quat_from_axis_angle(_EZ, dyaw), obj.pose.orientation)
    if not scene.workspace.contains(new_pos):
        del objects[outcome.object_index]  # pushed off the table: dropped
    else:
        objects[outcome.object_index] = replace(obj, pose=Pose6(new_pos, new_quat))
    return replace(scene, objects=tuple(objects))


def _footprint_rects(obj: PrismObject) -> list:
    """2-D footprint rectangles (center, axes 2x2 columns, half extents)."""
    r = obj.pose.rotation_matrix()
    rects = []
    for c, h in obj.component_boxes():
        center = (obj.pose.position + r @ c)[:2]
        rects.append((center, r[:2, :2], h[:2]))
    return rects


def _rect_penetration(a, b) -> float:
    """Penetration depth between two rectangles via the separating axis test."""
    ca, axa, ha = a
    cb, axb, hb = b
    d = cb - ca
    depth = math.inf
    for axes in (axa, axb):
        for k in range(2):
            n = axes[:, k]
            ra = ha[0] * abs(n @ axa[:, 0]) + ha[1] * abs(n @ axa[:, 1])
            rb = hb[0] * abs(n @ axb[:, 0]) + hb[1] * abs(n @ axb[:, 1])
            overlap = ra + rb - abs(n @ d)
            if overlap <= 0:
                return 0.0
            depth = min(depth, overlap)
    return depth


def object_penetration(a: PrismObject, b: PrismObject) -> float:
    """Maximum footprint penetration depth between two upright objects."""
    depth = 0.0
    for ra in _footprint_rects(a):
        for rb in _footprint_rects(b):
            depth = max(depth, _rect_penetration(ra, rb))
    return depth


def _sample_object(rng: np.random.Generator, shapes: Sequence[str], color_tag: int) -> PrismObject:
    shape = shapes[rng.integers(len(shapes))]
    if shape == "box":
        dims = (rng.uniform(0.05, 0.14), rng.uniform(0.03, 0.07), rng.uniform(0.04, 0.10))
    else:
        dims = (
            rng.uniform(0.08, 0.14),
            rng.uniform(0.025, 0.05),
            rng.uniform(0.05, 0.10),
            rng.uniform(0.025, 0.05),
            rng.uniform(0.03, 0.06),
        )
    return PrismObject(shape, dims, Pose6.identity(), color_tag)


def generate_scene(
    seed: int,
    kind: str = "simple",
    rng: Optional[np.random.Generator] = None,
    shapes: Sequence[str] = ("box", "t_shape"),
    workspace: Workspace = DEFAULT_WORKSPACE,
    n_objects: Optional[int] = None,
) -> Scene:
    """Deterministic procedural scene: upright objects with random yaw.

    Simple scenes keep centers at least 0.12 m apart; clutter scenes hold
    exactly 5 objects and allow contact but reject footprint interpenetration
    deeper than 1 mm.
    """
    if kind not in ("simple", "clutter"):
        raise ValueError(f"unknown scene kind {kind!r}")
    if rng is None:
        rng = np.random.default_rng(seed)
    for _restart in range(20):
        if n_objects is not None:
            n = n_objects
        elif kind == "clutter":
            n = 5
        else:
            n = int(rng.integers(1, 6))
        placed: list = []
        ok = True
        for i in range(n):
            proto = _sample_object(rng, shapes, color_tag=i)
            margin = proto.footprint_radius()
            lo = workspace.min[:2] + margin
            hi = workspace.max[:2] - margin
            accepted = None
            for _attempt in range(500):
                xy = rng.uniform(lo, hi)
                yaw = rng.uniform(0.0, 2 * math.pi)
                pose = Pose6(np.array([xy[0], xy[1], 0.0]), quat_from_axis_angle(_EZ, yaw))
                cand = replace(proto, pose=pose)
                if kind == "simple":
                    if all(
                        np.linalg.norm(xy - o.pose.position[:2]) >= SIMPLE_MIN_SEPARATION
                        for o in placed
                    ):
                        accepted = cand
                        break
                else:
                    if all(object_penetration(cand, o) <= CLUTTER_MAX_PENETRATION for o in placed):
                        accepted = cand
                        break
            if accepted is None:
                ok = False
                break
            placed.append(accepted)
        if ok:
            return Scene(tuple(placed), workspace, seed)
    raise SceneGenerationError(f"could not place objects for seed {seed} ({kind})")


def scene_to_dict(scene: Scene) -> dict:
    return {
        "seed": int(scene.seed),
        "workspace": {"min": scene.workspace.min.tolist(), "max": scene.workspace.max.tolist()},
        "objects": [
            {
                "shape": o.shape,
                "dims": list(o.dims),
                "position": o.pose.position.tolist(),
                "quaternion": o.pose.orientation.tolist(),
                "color_tag": int(o.color_tag),
            }
            for o in scene.objects
        ],
    }


def scene_from_dict(data: dict) -> Scene:
    ws = Workspace(np.array(data["workspace"]["min"]), np.array(data["workspace"]["max"]))
    objects = []
    for entry in data["objects"]:
        q = np.asarray(entry["quaternion"], dtype=np.float64)
        if abs(np.linalg.norm(q) - 1.0) > 1e-6:
            raise ValueError(f"object quaternion norm deviates from 1: {q}")
        pose = Pose6(np.array(entry["position"]), normalize_quaternion(q))
        objects.append(
            PrismObject(entry["shape"], tuple(entry["dims"]), pose, int(entry.get("color_tag", 0)))
        )
    return Scene(tuple(objects), ws, int(data.get("seed", 0)))


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(scene), indent=2) + "\n")


def load_scene(path) -> Scene:
    return scene_from_dict(json.loads(Path(path).read_text()))
