"""Behavior-cloning dataset generation and cross-entropy training of the
grasp evaluator.

Each training scene contributes exactly one positive sample (the demonstrated
grasp), a set of workspace-uniform negatives and a set of negatives perturbed
around the demonstration. Near negatives may occasionally land on valid grasps;
they are labeled negative regardless.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from . import features as F
from .field import EvaluatorWeights, init_evaluator_weights
from .scene import Scene, demonstrate_grasp, scene_from_dict, scene_to_dict
from .se3 import (
    Pose6,
    normalize_quaternion,
    post_process,
    quat_from_axis_angle,
    quat_multiply,
)
from .optimizer import random_candidates


@dataclass(frozen=True)
class TrainingSample:
    pose: Pose6
    label: str  # "positive" | "negative"
    scene_id: int = 0

    def __post_init__(self):
        if self.label not in ("positive", "negative"):
            raise ValueError(f"unknown label {self.label!r}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 400
    learning_rate: float = 1e-4
    negatives_uniform: int = 16
    negatives_near: int = 24
    near_sigma_t: float = 0.04
    near_sigma_r: float = math.radians(45.0)
    batch_size: int = 0  # 0 = full batch per scene
    seed: int = 0

    def __post_init__(self):
        if self.epochs <= 0 or self.learning_rate <= 0:
            raise ValueError("epochs and learning_rate must be positive")
        if self.negatives_uniform < 0 or self.negatives_near < 0:
            raise ValueError("negative counts must be >= 0")


def generate_samples(
    scene: Scene, demo: Pose6, cfg: TrainConfig, rng: np.random.Generator, scene_id: int = 0
) -> list:
    """One positive (the demo), uniform negatives over the workspace, and
    near negatives Gaussian-perturbed around the demo (post-processed back
    into the workspace)."""
    samples = [TrainingSample(demo, "positive", scene_id)]
    for cand in random_candidates(scene.workspace, cfg.negatives_uniform, rng) if cfg.negatives_uniform else []:
        samples.append(TrainingSample(cand, "negative", scene_id))
    for _ in range(cfg.negatives_near):
        pos = demo.position + rng.normal(0.0, cfg.near_sigma_t, 3)
        angle = abs(rng.normal(0.0, cfg.near_sigma_r))
        axis = rng.standard_normal(3)
        axis /= max(np.linalg.norm(axis), 1e-12)
        quat = quat_multiply(quat_from_axis_angle(axis, angle), demo.orientation)
        samples.append(
            TrainingSample(post_process(Pose6(pos, quat), scene.workspace), "negative", scene_id)
        )
    return samples


def build_dataset(scenes, cfg: TrainConfig, rng: np.random.Generator) -> list:
    """[(scene, samples)] with one scripted demonstration per scene."""
    dataset = []
    for i, scene in enumerate(scenes):
        demo = demonstrate_grasp(scene, rng)
        dataset.append((scene, generate_samples(scene, demo, cfg, rng, scene_id=i)))
    return dataset


def scene_features(scene: Scene, samples) -> np.ndarray:
    """(M, TEMPLATE_SIZE, ENTRY_FEATURES) feature tensor of a sample list."""
    boxes = F.scene_boxes(scene)
    vecs = np.array([s.pose.as_vec7() for s in samples])
    vecs[:, 3:] /= np.linalg.norm(vecs[:, 3:], axis=1, keepdims=True)
    return np.asarray(F.features_batch(vecs, boxes))


def _labels(samples) -> np.ndarray:
    return np.array([1.0 if s.label == "positive" else 0.0 for s in samples])


class TrainingDiverged(RuntimeError):
    pass


def train_evaluator(
    dataset, cfg: TrainConfig, rng: Optional[np.random.Generator] = None
) -> tuple:
    """Train the readout network with weighted binary cross-entropy and Adam.

    Full-batch per scene (or cfg.batch_size chunks), scenes shuffled per epoch;
    the positive term of each scene is weighted by its negative count. Returns
    (weights, per-epoch loss trace).
    """
    if not dataset:
        raise ValueError("dataset must be nonempty")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    per_scene = []
    for scene, samples in dataset:
        feats = scene_features(scene, samples)
        labels = _labels(samples)
        n_neg = int(np.sum(labels < 0.5))
        per_scene.append((feats, labels, float(max(n_neg, 1))))

    params = {k: v for k, v in init_evaluator_weights(cfg.seed).params.items()}
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(vv) for k, vv in params.items()}
    step = 0
    losses = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(per_scene))
        epoch_losses = []
        for idx in order:
            feats, labels, pos_weight = per_scene[idx]
            if cfg.batch_size and cfg.batch_size < len(labels):
                chunks = range(0, len(labels), cfg.batch_size)
                batches = [(feats[i : i + cfg.batch_size], labels[i : i + cfg.batch_size]) for i in chunks]
            else:
                batches = [(feats, labels)]
            for bf, bl in batches:
                params, m, v, step, loss = F.adam_train_step(
                    params, m, v, step, bf, bl, pos_weight, cfg.learning_rate
                )
                loss = float(loss)
                if not math.isfinite(loss):
                    raise TrainingDiverged(
                        f"non-finite loss {loss} at epoch {epoch}, scene index {int(idx)}"
                    )
                epoch_losses.append(loss)
        losses.append(float(np.mean(epoch_losses)))
    weights = EvaluatorWeights({k: np.asarray(val) for k, val in params.items()})
    if not weights.is_finite():
        raise TrainingDiverged("non-finite weights after training")
    return weights, losses


def predict_values(weights: EvaluatorWeights, dataset) -> tuple:
    """Evaluator outputs and labels over a dataset, in dataset order."""
    values, labels = [], []
    for scene, samples in dataset:
        feats = scene_features(scene, samples)
        values.append(np.asarray(F.values_from_features(weights.params, feats)))
        labels.append(_labels(samples))
    return np.concatenate(values), np.concatenate(labels)


def evaluate_classifier(weights: EvaluatorWeights, heldout) -> tuple:
    """(accuracy at threshold 0.5, rank-based AUC) over held-out samples."""
    if not heldout:
        raise ValueError("held-out dataset must be nonempty")
    values, labels = predict_values(weights, heldout)
    accuracy = float(np.mean((values >= 0.5) == (labels > 0.5)))
    pos = labels > 0.5
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        return accuracy, float("nan")
    ranks = rankdata(values)
    auc = (float(ranks[pos].sum()) - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)
    return accuracy, float(auc)


def dataset_to_dict(dataset) -> dict:
    return {
        "scenes": [
            {
                "scene": scene_to_dict(scene),
                "samples": [
                    {
                        "position": s.pose.position.tolist(),
                        "quaternion": s.pose.orientation.tolist(),
                        "label": s.label,
                        "scene_id": s.scene_id,
                    }
                    for s in samples
                ],
            }
            for scene, samples in dataset
        ]
    }


def dataset_from_dict(data: dict) -> list:
    dataset = []
    for entry in data["scenes"]:
        scene = scene_from_dict(entry["scene"])
        samples = [
            TrainingSample(
                Pose6(np.array(s["position"]), normalize_quaternion(np.array(s["quaternion"]))),
                s["label"],
                int(s.get("scene_id", 0)),
            )
            for s in entry["samples"]
        ]
        dataset.append((scene, samples))
    return dataset


def save_dataset(dataset, path) -> None:
    Path(path).write_text(json.dumps(dataset_to_dict(dataset)) + "\n")


def load_dataset(path) -> list:
    return dataset_from_dict(json.loads(Path(path).read_text()))


def save_loss_trace(losses, path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,loss\n")
        for i, loss in enumerate(losses):
            fh.write(f"{i},{repr(float(loss))}\n")
