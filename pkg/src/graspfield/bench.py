"""Benchmark harness: simple, clutter and held-out-shape task protocols with
Table-style metric bookkeeping, plus report export.

Trials and episodes are fully independent given their derived seeds and are
reduced in index order, so every run is reproducible from the master seed.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Optional

import numpy as np

from . import plots
from .field import DEFAULT_TAU, GraspValueField, LearnedField, OracleField, load_weights
from .optimizer import OptimizeConfig, StageConfig, optimize
from .scene import (
    Scene,
    SceneGenerationError,
    apply_outcome,
    generate_scene,
    grasp_errors,
    simulate_grasp,
)

CLUTTER_OBJECTS = 5
CLUTTER_ATTEMPTS = 10


@dataclass(frozen=True)
class RunConfig:
    field_kind: str = "oracle"  # "oracle" | "learned"
    weights_path: Optional[str] = None
    trials: int = 100
    episodes: int = 20
    seed: int = 0
    tau: float = DEFAULT_TAU
    optimize: OptimizeConfig = dc_field(default_factory=OptimizeConfig)
    shapes: tuple = ("box", "t_shape")

    def __post_init__(self):
        if self.field_kind not in ("oracle", "learned"):
            raise ValueError(f"unknown field kind {self.field_kind!r}")
        if self.field_kind == "learned" and not self.weights_path:
            raise ValueError("learned field requires a weights_path")
        object.__setattr__(self, "shapes", tuple(self.shapes))


@dataclass(frozen=True)
class TaskReport:
    task: str  # "simple" | "clutter" | "heldout"
    trials: int
    success_rate: float
    mean_t_err: float
    mean_r_err: float
    cleared: Optional[float]  # mean per episode, clutter only
    dropped: Optional[float]
    config_digest: str


def config_dict(cfg: RunConfig, task: str) -> dict:
    return {
        "task": task,
        "field_kind": cfg.field_kind,
        "weights_path": cfg.weights_path,
        "trials": cfg.trials,
        "episodes": cfg.episodes,
        "seed": cfg.seed,
        "tau": cfg.tau,
        "shapes": list(cfg.shapes),
        "optimize": {
            "n_candidates": cfg.optimize.n_candidates,
            "seed": cfg.optimize.seed,
            "stages": [
                {
                    "steps": s.steps,
                    "initial_lr": s.initial_lr,
                    "decay": s.decay,
                    "active_dims": s.active_dims,
                }
                for s in cfg.optimize.stages
            ],
        },
    }


def config_digest(cfg: RunConfig, task: str) -> str:
    blob = json.dumps(config_dict(cfg, task), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def run_config_from_dict(data: dict) -> RunConfig:
    opt = data.get("optimize", {})
    stages = tuple(
        StageConfig(s["steps"], s["initial_lr"], s["decay"], s.get("active_dims", "both"))
        for s in opt.get("stages", [])
    ) or None
    kwargs = {}
    if stages:
        kwargs["stages"] = stages
    ocfg = OptimizeConfig(
        n_candidates=opt.get("n_candidates", 64), seed=opt.get("seed", 0), **kwargs
    )
    return RunConfig(
        field_kind=data.get("field_kind", "oracle"),
        weights_path=data.get("weights_path"),
        trials=data.get("trials", 100),
        episodes=data.get("episodes", 20),
        seed=data.get("seed", 0),
        tau=data.get("tau", DEFAULT_TAU),
        optimize=ocfg,
        shapes=tuple(data.get("shapes", ("box", "t_shape"))),
    )


def make_field(cfg: RunConfig, scene: Scene) -> GraspValueField:
    if cfg.field_kind == "oracle":
        return OracleField(scene, cfg.tau)
    return LearnedField(load_weights(cfg.weights_path), scene)


def _generate_with_retry(seed: int, kind: str, shapes, n_objects=None) -> Scene:
    for k in range(10):
        try:
            return generate_scene(seed + 1000003 * k, kind, shapes=shapes, n_objects=n_objects)
        except SceneGenerationError:
            continue
    raise SceneGenerationError(f"scene generation kept failing from seed {seed}")


def _trial_seeds(master_seed: int, n: int):
    return np.random.SeedSequence(master_seed).spawn(n)


def _run_single_grasp_task(cfg: RunConfig, task: str, shapes) -> TaskReport:
    if cfg.trials <= 0:
        raise ValueError("trials must be positive; empty reports are forbidden")
    successes = 0
    t_errs, r_errs = [], []
    for child in _trial_seeds(cfg.seed, cfg.trials):
        state = child.generate_state(2)
        scene = _generate_with_retry(int(state[0]), "simple", shapes)
        field = make_field(cfg, scene)
        rng = np.random.default_rng(int(state[1]))
        best, _ = optimize(field, scene.workspace, cfg.optimize, rng)
        outcome = simulate_grasp(scene, best)
        successes += outcome.kind == "success"
        t_err, r_err = grasp_errors(best, scene)
        t_errs.append(t_err)
        r_errs.append(r_err)
    return TaskReport(
        task=task,
        trials=cfg.trials,
        success_rate=successes / cfg.trials,
        mean_t_err=float(np.mean(t_errs)),
        mean_r_err=float(np.mean(r_errs)),
        cleared=None,
        dropped=None,
        config_digest=config_digest(cfg, task),
    )


def run_simple(cfg: RunConfig) -> TaskReport:
    """Independent seeded simple scenes; one optimized grasp attempt each."""
    return _run_single_grasp_task(cfg, "simple", cfg.shapes)


def run_heldout(cfg: RunConfig) -> TaskReport:
    """Generalization analog of the novel-object task: T-shape-only scenes."""
    return _run_single_grasp_task(cfg, "heldout", ("t_shape",))


def run_clutter(cfg: RunConfig) -> TaskReport:
    """Up to 10 attempts to clear 5-object clutter scenes; tracks grasp
    success rate, objects cleared and objects dropped off the workspace."""
    if cfg.episodes <= 0:
        raise ValueError("episodes must be positive; empty reports are forbidden")
    attempts = successes = 0
    cleared_per_ep, dropped_per_ep = [], []
    t_errs, r_errs = [], []
    for child in _trial_seeds(cfg.seed, cfg.episodes):
        state = child.generate_state(3)
        scene = _generate_with_retry(int(state[0]), "clutter", cfg.shapes)
        rng = np.random.default_rng(int(state[1]))
        outcome_rng = np.random.default_rng(int(state[2]))
        cleared = dropped = 0
        for _attempt in range(CLUTTER_ATTEMPTS):
            if not scene.objects:
                break
            field = make_field(cfg, scene)
            best, _ = optimize(field, scene.workspace, cfg.optimize, rng)
            outcome = simulate_grasp(scene, best)
            t_err, r_err = grasp_errors(best, scene)
            t_errs.append(t_err)
            r_errs.append(r_err)
            new_scene = apply_outcome(scene, outcome, outcome_rng)
            attempts += 1
            if outcome.kind == "success":
                successes += 1
                cleared += 1
            else:
                dropped += len(scene.objects) - len(new_scene.objects)
            scene = new_scene
            remaining = len(scene.objects)
            if cleared + dropped + remaining != CLUTTER_OBJECTS:
                raise AssertionError("clutter bookkeeping lost an object")
        cleared_per_ep.append(cleared)
        dropped_per_ep.append(dropped)
    return TaskReport(
        task="clutter",
        trials=attempts,
        success_rate=successes / attempts,
        mean_t_err=float(np.mean(t_errs)),
        mean_r_err=float(np.mean(r_errs)),
        cleared=float(np.mean(cleared_per_ep)),
        dropped=float(np.mean(dropped_per_ep)),
        config_digest=config_digest(cfg, "clutter"),
    )


def report_to_dict(report: TaskReport) -> dict:
    return {
        "task": report.task,
        "trials": report.trials,
        "success_rate": report.success_rate,
        "mean_t_err": report.mean_t_err,
        "mean_r_err": report.mean_r_err,
        "cleared": report.cleared,
        "dropped": report.dropped,
        "config_digest": report.config_digest,
    }


def report_from_dict(data: dict) -> TaskReport:
    return TaskReport(
        task=data["task"],
        trials=int(data["trials"]),
        success_rate=float(data["success_rate"]),
        mean_t_err=float(data["mean_t_err"]),
        mean_r_err=float(data["mean_r_err"]),
        cleared=None if data["cleared"] is None else float(data["cleared"]),
        dropped=None if data["dropped"] is None else float(data["dropped"]),
        config_digest=data["config_digest"],
    )


def format_report_table(report: TaskReport) -> str:
    rows = [
        ("task", report.task),
        ("trials", str(report.trials)),
        ("success_rate", f"{report.success_rate:.2f}"),
        ("mean_t_err_mm", f"{1000 * report.mean_t_err:.2f}"),
        ("mean_r_err_deg", f"{math.degrees(report.mean_r_err):.2f}"),
    ]
    if report.cleared is not None:
        rows.append(("cleared", f"{report.cleared:.2f}"))
        rows.append(("dropped", f"{report.dropped:.2f}"))
    rows.append(("config_digest", report.config_digest))
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k:<{width}}  {v}" for k, v in rows) + "\n"


def export_report(report: TaskReport, path) -> Path:
    """Write the report as JSON (full precision), an aligned text table, and a
    summary figure; returns the JSON path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n")
    path.with_suffix(".txt").write_text(format_report_table(report))
    plots.render_report_figure(report, path.with_suffix(".png"))
    return path


def load_report(path) -> TaskReport:
    return report_from_dict(json.loads(Path(path).read_text()))
