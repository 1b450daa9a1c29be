"""Staged first-order grasp pose optimization.

Random candidates are refined in two stages (position-only, then
orientation-only) of Adam ascent on the grasp-value field, with per-step
post-processing (workspace clipping + quaternion normalization) and a final
argmax over the candidates' final poses.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Optional

import numpy as np

from .field import GraspValueField
from .se3 import Pose6, Workspace, clip_position, random_quaternion

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

_ACTIVE_DIMS = {
    "position_only": np.array([1.0, 1, 1, 0, 0, 0, 0]),
    "orientation_only": np.array([0.0, 0, 0, 1, 1, 1, 1]),
    "both": np.ones(7),
}


@dataclass(frozen=True)
class StageConfig:
    steps: int
    initial_lr: float
    decay: float
    active_dims: str = "both"

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.initial_lr <= 0:
            raise ValueError("initial_lr must be > 0")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must be in (0, 1]")
        if self.active_dims not in _ACTIVE_DIMS:
            raise ValueError(f"unknown active_dims {self.active_dims!r}")

    def lr_at(self, step: int) -> float:
        """Learning rate at 0-based step k: initial_lr * decay**k."""
        return self.initial_lr * self.decay**step


def default_stages() -> tuple:
    return (
        StageConfig(16, 0.05, 0.9, "position_only"),
        StageConfig(16, 0.05, 0.99, "orientation_only"),
    )


@dataclass(frozen=True)
class OptimizeConfig:
    n_candidates: int = 64
    stages: tuple = dc_field(default_factory=default_stages)
    seed: int = 0

    def __post_init__(self):
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be >= 1")
        object.__setattr__(self, "stages", tuple(self.stages))


@dataclass
class AdamState:
    """Per-coordinate first/second moment accumulators; reset between stages."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @staticmethod
    def zeros(shape) -> "AdamState":
        return AdamState(np.zeros(shape), np.zeros(shape), 0)


def adam_step(state: AdamState, grad: np.ndarray, lr: float) -> np.ndarray:
    """Bias-corrected adaptive-moment ascent increment (to be added to the
    parameters). Mutates state."""
    grad = np.asarray(grad, dtype=np.float64)
    if not np.all(np.isfinite(grad)):
        raise ValueError("non-finite gradient in adam_step")
    state.t += 1
    state.m = ADAM_BETA1 * state.m + (1 - ADAM_BETA1) * grad
    state.v = ADAM_BETA2 * state.v + (1 - ADAM_BETA2) * grad**2
    m_hat = state.m / (1 - ADAM_BETA1**state.t)
    v_hat = state.v / (1 - ADAM_BETA2**state.t)
    return lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def random_candidates(ws: Workspace, n: int, rng: np.random.Generator) -> list:
    """n poses with uniform positions in the workspace and uniform random
    orientations."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return [
        Pose6(rng.uniform(ws.min, ws.max), random_quaternion(rng)) for _ in range(n)
    ]


@dataclass
class OptimizeTrace:
    """Per-candidate, per-step poses and values. Column 0 is the initial
    candidate; ``stage_of_col``/``step_of_col`` are -1 there."""

    poses: np.ndarray  # (n_candidates, total_steps + 1, 7)
    values: np.ndarray  # (n_candidates, total_steps + 1)
    stage_of_col: np.ndarray  # (total_steps + 1,)
    step_of_col: np.ndarray  # (total_steps + 1,)
    best_index: int = 0


def _post_process_many(vec7s: np.ndarray, ws: Workspace) -> np.ndarray:
    out = vec7s.copy()
    out[:, :3] = np.clip(out[:, :3], ws.min, ws.max)
    norms = np.linalg.norm(out[:, 3:], axis=1, keepdims=True)
    if np.any(norms <= 1e-12):
        raise ValueError("degenerate quaternion during optimization")
    out[:, 3:] /= norms
    return out


def optimize(
    field: GraspValueField,
    ws: Workspace,
    cfg: OptimizeConfig = OptimizeConfig(),
    rng: Optional[np.random.Generator] = None,
) -> tuple:
    """Run the staged optimizer; returns (best pose, trace).

    Candidates evolve independently; inactive coordinates have their gradient
    masked to zero; Adam accumulators reset at stage boundaries; ties in the
    final argmax break toward the lowest candidate index.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    candidates = random_candidates(ws, cfg.n_candidates, rng)
    vecs = np.array([c.as_vec7() for c in candidates])
    vecs = _post_process_many(vecs, ws)

    total_steps = sum(s.steps for s in cfg.stages)
    poses = np.empty((cfg.n_candidates, total_steps + 1, 7))
    values = np.empty((cfg.n_candidates, total_steps + 1))
    stage_of_col = np.full(total_steps + 1, -1, dtype=int)
    step_of_col = np.full(total_steps + 1, -1, dtype=int)

    poses[:, 0, :] = vecs
    values[:, 0] = field.value_many(vecs)

    col = 1
    for stage_idx, stage in enumerate(cfg.stages):
        mask = _ACTIVE_DIMS[stage.active_dims]
        state = AdamState.zeros(vecs.shape)
        for k in range(stage.steps):
            grads = field.gradient_many(vecs) * mask
            vecs = vecs + adam_step(state, grads, stage.lr_at(k))
            vecs = _post_process_many(vecs, ws)
            poses[:, col, :] = vecs
            values[:, col] = field.value_many(vecs)
            stage_of_col[col] = stage_idx
            step_of_col[col] = k
            col += 1

    final_values = values[:, -1]
    best = int(np.argmax(final_values))  # argmax returns the first (lowest) index on ties
    trace = OptimizeTrace(poses, values, stage_of_col, step_of_col, best)
    return Pose6.from_vec7(poses[best, -1, :]), trace


SLICE_DIMS = ("tx", "ty", "tz", "rx", "ry", "rz")
_AXIS_OF_DIM = {d: np.eye(3)[i % 3] for i, d in enumerate(SLICE_DIMS)}


def _perturb_many(center: Pose6, dim: str, offsets: np.ndarray) -> np.ndarray:
    """Vectorized single-coordinate perturbation of the center pose."""
    n = offsets.shape[0]
    out = np.tile(center.as_vec7(), (n, 1))
    axis = _AXIS_OF_DIM[dim]
    if dim.startswith("t"):
        out[:, :3] += offsets[:, None] * axis
    else:
        half = 0.5 * offsets
        cw = np.cos(half)
        xyz = np.sin(half)[:, None] * axis
        # right-multiply: rotation about the center pose's TCP axes
        w0 = out[:, 3].copy()
        v0 = out[:, 4:7].copy()
        out[:, 3] = w0 * cw - np.sum(xyz * v0, axis=1)
        out[:, 4:7] = w0[:, None] * xyz + cw[:, None] * v0 + np.cross(v0, xyz)
    return out


def slice_values(
    field: GraspValueField,
    center: Pose6,
    dims: tuple,
    extent: float,
    resolution: int,
) -> np.ndarray:
    """2-D value grid over [-extent, +extent]^2 in two pose coordinates.

    grid[i, j] is the value at offset u[j] in dims[0] and u[i] in dims[1],
    u = linspace(-extent, extent, resolution); all other coordinates stay at
    the center pose. Rotational dims are axis-angle twists about the center
    pose's TCP axes.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    if len(dims) != 2 or any(d not in SLICE_DIMS for d in dims):
        raise ValueError(f"dims must be a pair from {SLICE_DIMS}")
    u = np.linspace(-extent, extent, resolution)
    grid = np.empty((resolution, resolution))
    for i in range(resolution):
        row_center = Pose6.from_vec7(_perturb_many(center, dims[1], np.array([u[i]]))[0])
        vecs = _perturb_many(row_center, dims[0], u)
        grid[i, :] = field.value_many(vecs)
    return grid


def save_slice(grid: np.ndarray, center: Pose6, dims, extent, resolution, out_prefix) -> None:
    """Plain-text matrix (one row per line) plus a JSON sidecar."""
    out_prefix = Path(out_prefix)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    with open(out_prefix.with_suffix(".txt"), "w") as fh:
        for row in grid:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
    meta = {
        "center_position": center.position.tolist(),
        "center_quaternion": center.orientation.tolist(),
        "dims": list(dims),
        "extent": float(extent),
        "resolution": int(resolution),
        "row_coordinate": dims[1],
        "column_coordinate": dims[0],
    }
    out_prefix.with_suffix(".meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def load_slice(out_prefix):
    out_prefix = Path(out_prefix)
    grid = np.loadtxt(out_prefix.with_suffix(".txt"), ndmin=2)
    meta = json.loads(out_prefix.with_suffix(".meta.json").read_text())
    return grid, meta


def save_trace(trace: OptimizeTrace, path) -> None:
    """Line-delimited records: candidate stage step x y z qw qx qy qz value.

    The initialization row of each candidate carries stage = step = -1.
    """
    with open(path, "w") as fh:
        fh.write("# candidate stage step x y z qw qx qy qz value\n")
        n, cols = trace.values.shape
        for c in range(n):
            for col in range(cols):
                pose = " ".join(repr(float(x)) for x in trace.poses[c, col])
                fh.write(
                    f"{c} {trace.stage_of_col[col]} {trace.step_of_col[col]} "
                    f"{pose} {repr(float(trace.values[c, col]))}\n"
                )
