"""Grasp-value fields: the oracle-backed analytic field and the trainable
evaluator over geometric pose-set features.

Both expose ``value(pose) -> [0, 1]`` and ``gradient(pose) -> 7-vector``
(3 position components per meter, 4 raw quaternion components). Batched
variants operate on (N, 7) arrays of raw pose vectors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import features as F
from .scene import FamilyTable, Scene, negative_grasp_error_many
from .se3 import Pose6, PoseSet5, compute_pose_set, default_template, normalize_quaternion

DEFAULT_TAU = 0.25
FD_STEP = 1e-4  # central-difference step of the oracle field gradient

WEIGHTS_FORMAT_VERSION = 1


class GraspValueField:
    """Contract: deterministic value in [0, 1] plus a 7-vector gradient."""

    def value(self, p: Pose6) -> float:
        return float(self.value_many(p.as_vec7()[None, :])[0])

    def gradient(self, p: Pose6) -> np.ndarray:
        return self.gradient_many(p.as_vec7()[None, :])[0]

    def value_many(self, vec7s: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient_many(self, vec7s: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def oracle_value(p: Pose6, scene: Scene, tau: float = DEFAULT_TAU) -> float:
    """exp(negative_grasp_error / tau): 1 exactly on valid grasps, decaying
    smoothly with the combined error."""
    return OracleField(scene, tau).value(p)


class OracleField(GraspValueField):
    """Analytic stand-in for the learned field, built on the scene oracle."""

    def __init__(self, scene: Scene, tau: float = DEFAULT_TAU):
        if tau <= 0:
            raise ValueError("tau must be positive")
        self.scene = scene
        self.tau = tau
        self._table = FamilyTable(scene)

    def value_many(self, vec7s: np.ndarray) -> np.ndarray:
        vec7s = np.atleast_2d(vec7s)
        quats = vec7s[:, 3:]
        norms = np.linalg.norm(quats, axis=1, keepdims=True)
        if np.any(norms <= 1e-12):
            raise ValueError("degenerate quaternion in oracle field query")
        err = negative_grasp_error_many(vec7s[:, :3], quats / norms, self._table)
        return np.exp(err / self.tau)

    def gradient_many(self, vec7s: np.ndarray) -> np.ndarray:
        vec7s = np.atleast_2d(vec7s)
        grad = np.empty_like(vec7s)
        for k in range(7):
            plus = vec7s.copy()
            minus = vec7s.copy()
            plus[:, k] += FD_STEP
            minus[:, k] -= FD_STEP
            grad[:, k] = (self.value_many(plus) - self.value_many(minus)) / (2 * FD_STEP)
        return grad


@dataclass
class EvaluatorWeights:
    """Readout network parameters (float64 numpy arrays keyed by layer)."""

    params: dict

    def __post_init__(self):
        for key in F.PARAM_KEYS:
            if key not in self.params:
                raise ValueError(f"missing parameter {key!r}")
            arr = np.asarray(self.params[key], dtype=np.float64)
            if arr.shape != F.PARAM_SHAPES[key]:
                raise ValueError(
                    f"parameter {key!r} has shape {arr.shape}, expected {F.PARAM_SHAPES[key]}"
                )
            self.params[key] = arr

    def flat(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in F.PARAM_KEYS])

    @staticmethod
    def from_flat(vec: np.ndarray) -> "EvaluatorWeights":
        params = {}
        offset = 0
        for key in F.PARAM_KEYS:
            shape = F.PARAM_SHAPES[key]
            size = int(np.prod(shape))
            params[key] = vec[offset : offset + size].reshape(shape).copy()
            offset += size
        return EvaluatorWeights(params)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.flat())))


def init_evaluator_weights(seed: int) -> EvaluatorWeights:
    """Seeded initialization: 1/sqrt(fan_in) Gaussians for weights, zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for key in F.PARAM_KEYS:
        shape = F.PARAM_SHAPES[key]
        if key.endswith("_b"):
            params[key] = np.zeros(shape)
        else:
            params[key] = rng.standard_normal(shape) / math.sqrt(shape[0])
    return EvaluatorWeights(params)


def extract_features(scene: Scene, pose_set: PoseSet5) -> np.ndarray:
    """Flat feature vector of a world-frame pose set: per entry the signed
    distance, softened occupancy, normal alignment and TCP-frame offset to the
    nearest object center."""
    boxes = F.scene_boxes(scene)
    feats = F.features_entries_jit(
        np.asarray(pose_set.positions), np.asarray(pose_set.directions),
        np.asarray(pose_set.frame), boxes,
    )
    return np.asarray(feats).reshape(-1)


def extract_pose_features(scene: Scene, p: Pose6) -> np.ndarray:
    """Convenience: pose-set expansion of p followed by extract_features."""
    return extract_features(scene, compute_pose_set(p, default_template()))


def evaluator_value(weights: EvaluatorWeights, feature_vec: np.ndarray) -> float:
    """Deterministic numpy forward pass of the readout network on a flat
    feature vector; logistic output in (0, 1)."""
    feature_vec = np.asarray(feature_vec, dtype=np.float64)
    if feature_vec.shape != (F.FEATURE_LENGTH,):
        raise ValueError(
            f"feature vector has shape {feature_vec.shape}, expected ({F.FEATURE_LENGTH},)"
        )
    p = weights.params
    feats = feature_vec.reshape(F.TEMPLATE_SIZE, F.ENTRY_FEATURES) * np.asarray(F.INPUT_SCALE)
    h = np.tanh(feats @ p["entry_w"] + p["entry_b"])
    h = np.tanh(h.reshape(-1) @ p["reduce_w"] + p["reduce_b"])
    h = np.tanh(h @ p["h1_w"] + p["h1_b"])
    h = np.tanh(h @ p["h2_w"] + p["h2_b"])
    logit = float((h @ p["out_w"] + p["out_b"])[0])
    return 1.0 / (1.0 + math.exp(-logit))


class LearnedField(GraspValueField):
    """Trainable evaluator bound to a scene; gradients are exact chain-rule
    derivatives through features and network (computed by autodiff)."""

    def __init__(self, weights: EvaluatorWeights, scene: Scene):
        self.weights = weights
        self.scene = scene
        self._boxes = F.scene_boxes(scene)
        self._params = {k: np.asarray(v) for k, v in weights.params.items()}

    def value_many(self, vec7s: np.ndarray) -> np.ndarray:
        vec7s = np.atleast_2d(np.asarray(vec7s, dtype=np.float64))
        return np.asarray(F.value_batch(self._params, vec7s, self._boxes))

    def gradient_many(self, vec7s: np.ndarray) -> np.ndarray:
        vec7s = np.atleast_2d(np.asarray(vec7s, dtype=np.float64))
        return np.asarray(F.grad_batch(self._params, vec7s, self._boxes))


def save_weights(weights: EvaluatorWeights, path) -> None:
    """Binary weights file: one JSON header line, then row-major float64."""
    if not weights.is_finite():
        raise ValueError("refusing to serialize non-finite weights")
    header = {
        "format_version": WEIGHTS_FORMAT_VERSION,
        "feature_length": F.FEATURE_LENGTH,
        "layers": {k: list(F.PARAM_SHAPES[k]) for k in F.PARAM_KEYS},
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("ascii"))
        fh.write(weights.flat().astype("<f8").tobytes())


def load_weights(path) -> EvaluatorWeights:
    with open(Path(path), "rb") as fh:
        header = json.loads(fh.readline().decode("ascii"))
        blob = fh.read()
    if header.get("format_version") != WEIGHTS_FORMAT_VERSION:
        raise ValueError(f"unsupported weights format version {header.get('format_version')}")
    if header.get("feature_length") != F.FEATURE_LENGTH:
        raise ValueError("weights file feature length does not match this build")
    for key in F.PARAM_KEYS:
        if tuple(header["layers"].get(key, ())) != F.PARAM_SHAPES[key]:
            raise ValueError(f"layer {key!r} shape mismatch in weights file")
    flat = np.frombuffer(blob, dtype="<f8")
    expected = sum(int(np.prod(F.PARAM_SHAPES[k])) for k in F.PARAM_KEYS)
    if flat.size != expected:
        raise ValueError(f"weights file holds {flat.size} values, expected {expected}")
    if not np.all(np.isfinite(flat)):
        raise ValueError("weights file contains non-finite values")
    return EvaluatorWeights.from_flat(flat.astype(np.float64))
