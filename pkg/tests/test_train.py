import math

import numpy as np
import pytest

from graspfield import features as F
from graspfield.field import init_evaluator_weights
from graspfield.scene import generate_scene, grasp_errors
from graspfield.train import (
    TrainConfig,
    TrainingSample,
    build_dataset,
    dataset_from_dict,
    dataset_to_dict,
    evaluate_classifier,
    generate_samples,
    load_dataset,
    predict_values,
    save_dataset,
    save_loss_trace,
    scene_features,
    train_evaluator,
)
from graspfield.scene import demonstrate_grasp


@pytest.fixture(scope="module")
def tiny_dataset():
    cfg = TrainConfig(epochs=40, seed=2, negatives_uniform=8, negatives_near=8)
    scenes = [generate_scene(100 + i, "simple", shapes=("box",)) for i in range(3)]
    return build_dataset(scenes, cfg, np.random.default_rng(2)), cfg


@pytest.fixture(scope="module")
def tiny_model(tiny_dataset):
    dataset, cfg = tiny_dataset
    weights, losses = train_evaluator(dataset, cfg)
    return weights, losses


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-1.0)
    with pytest.raises(ValueError):
        TrainConfig(negatives_uniform=-1)
    with pytest.raises(ValueError):
        TrainingSample(None, "maybe")


def test_default_negative_budget():
    cfg = TrainConfig()
    assert cfg.negatives_uniform + cfg.negatives_near == 40
    assert cfg.epochs == 400
    assert cfg.learning_rate == pytest.approx(1e-4)


def test_generate_samples_composition():
    cfg = TrainConfig(negatives_uniform=10, negatives_near=6)
    scene = generate_scene(7, "simple", shapes=("box",))
    demo = demonstrate_grasp(scene, np.random.default_rng(0))
    samples = generate_samples(scene, demo, cfg, np.random.default_rng(1), scene_id=3)
    assert len(samples) == 17
    assert samples[0].label == "positive"
    assert np.array_equal(samples[0].pose.as_vec7(), demo.as_vec7())
    assert all(s.label == "negative" for s in samples[1:])
    assert all(s.scene_id == 3 for s in samples)
    for s in samples:
        assert scene.workspace.contains(s.pose.position)
        assert abs(np.linalg.norm(s.pose.orientation) - 1.0) < 1e-9
    # near negatives cluster around the demonstration
    near = samples[11:]
    dists = [np.linalg.norm(s.pose.position - demo.position) for s in near]
    assert np.median(dists) < 4 * cfg.near_sigma_t * math.sqrt(3)


def test_build_dataset_has_one_valid_positive_per_scene(tiny_dataset):
    dataset, _ = tiny_dataset
    assert len(dataset) == 3
    for scene, samples in dataset:
        positives = [s for s in samples if s.label == "positive"]
        assert len(positives) == 1
        t, r = grasp_errors(positives[0].pose, scene)
        assert t < 1e-9 and r < 1e-6


def test_scene_features_shape(tiny_dataset):
    dataset, _ = tiny_dataset
    scene, samples = dataset[0]
    feats = scene_features(scene, samples)
    assert feats.shape == (len(samples), F.TEMPLATE_SIZE, F.ENTRY_FEATURES)
    assert np.all(np.isfinite(feats))


def _reference_bce(weights, feats, labels, pos_weight):
    """Frozen numpy reference of the weighted binary cross-entropy."""
    total = w_total = 0.0
    p = weights.params
    for f, y in zip(feats, labels):
        h = np.tanh(f * np.asarray(F.INPUT_SCALE) @ p["entry_w"] + p["entry_b"])
        h = np.tanh(h.reshape(-1) @ p["reduce_w"] + p["reduce_b"])
        h = np.tanh(h @ p["h1_w"] + p["h1_b"])
        h = np.tanh(h @ p["h2_w"] + p["h2_b"])
        logit = float((h @ p["out_w"] + p["out_b"])[0])
        per = y * np.logaddexp(0.0, -logit) + (1 - y) * np.logaddexp(0.0, logit)
        w = pos_weight if y > 0.5 else 1.0
        total += w * per
        w_total += w
    return total / w_total


def test_loss_matches_reference(tiny_dataset):
    dataset, _ = tiny_dataset
    scene, samples = dataset[0]
    weights = init_evaluator_weights(4)
    feats = scene_features(scene, samples)
    labels = np.array([1.0 if s.label == "positive" else 0.0 for s in samples])
    ours = float(F.weighted_bce_loss(weights.params, feats, labels, 16.0))
    assert ours == pytest.approx(_reference_bce(weights, feats, labels, 16.0), rel=1e-10)


def test_training_reduces_loss(tiny_model):
    _, losses = tiny_model
    assert len(losses) == 40
    assert losses[-1] < 0.5 * losses[0]
    assert all(math.isfinite(l) for l in losses)


def test_training_deterministic(tiny_dataset):
    dataset, cfg = tiny_dataset
    w1, l1 = train_evaluator(dataset, cfg)
    w2, l2 = train_evaluator(dataset, cfg)
    assert np.array_equal(w1.flat(), w2.flat())
    assert l1 == l2


def test_training_rejects_empty():
    with pytest.raises(ValueError):
        train_evaluator([], TrainConfig())


def test_positive_scores_above_negatives(tiny_model, tiny_dataset):
    weights, _ = tiny_model
    dataset, _ = tiny_dataset
    values, labels = predict_values(weights, dataset)
    assert values.shape == labels.shape
    assert values[labels > 0.5].min() > values[labels < 0.5].mean()


def test_classifier_metrics_match_pair_counting(tiny_model, tiny_dataset):
    weights, _ = tiny_model
    dataset, _ = tiny_dataset
    acc, auc = evaluate_classifier(weights, dataset)
    values, labels = predict_values(weights, dataset)
    acc_ref = np.mean((values >= 0.5) == (labels > 0.5))
    pos, neg = values[labels > 0.5], values[labels < 0.5]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    auc_ref = wins / (len(pos) * len(neg))
    assert acc == pytest.approx(acc_ref, abs=1e-12)
    assert auc == pytest.approx(auc_ref, abs=1e-12)
    with pytest.raises(ValueError):
        evaluate_classifier(weights, [])


def test_dataset_serialization_roundtrip(tiny_dataset, tmp_path):
    dataset, _ = tiny_dataset
    path = tmp_path / "dataset.json"
    save_dataset(dataset, path)
    loaded = load_dataset(path)
    assert len(loaded) == len(dataset)
    for (s1, a), (s2, b) in zip(dataset, loaded):
        assert len(s1.objects) == len(s2.objects)
        assert len(a) == len(b)
        for x, y in zip(a, b):
            assert x.label == y.label and x.scene_id == y.scene_id
            # loading renormalizes quaternions: compare within one ulp
            assert np.allclose(x.pose.as_vec7(), y.pose.as_vec7(), atol=1e-15)


def test_loss_trace_file(tmp_path):
    path = tmp_path / "loss.csv"
    save_loss_trace([0.5, 0.25], path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "epoch,loss"
    assert lines[1] == "0,0.5"
    assert lines[2] == "1,0.25"


def test_dataset_from_dict_defaults_scene_id(tiny_dataset):
    dataset, _ = tiny_dataset
    data = dataset_to_dict(dataset)
    for entry in data["scenes"]:
        for s in entry["samples"]:
            s.pop("scene_id")
    loaded = dataset_from_dict(data)
    assert all(s.scene_id == 0 for _, samples in loaded for s in samples)
