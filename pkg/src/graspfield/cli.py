"""Command line interface.

Common flags: --seed, --config <json file>, --out <dir>. Reports, figures and
slice grids are written under --out; the exit code is 0 only when the run
completed all trials.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import click
import numpy as np

from . import bench, plots
from .field import LearnedField, OracleField, load_weights, save_weights
from .optimizer import optimize as run_optimize, save_slice, save_trace, slice_values
from .scene import demonstrate_grasp, generate_scene, load_scene, save_scene
from .se3 import Pose6, normalize_quaternion
from .train import (
    TrainConfig,
    build_dataset,
    evaluate_classifier,
    load_dataset,
    save_dataset,
    save_loss_trace,
    train_evaluator,
)


def _load_config(config_path) -> dict:
    if config_path is None:
        return {}
    return json.loads(Path(config_path).read_text())


def _out_dir(out) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _common(fn):
    fn = click.option("--seed", type=int, default=0, show_default=True)(fn)
    fn = click.option("--config", "config_path", type=click.Path(exists=True), default=None)(fn)
    fn = click.option("--out", type=click.Path(), default="out", show_default=True)(fn)
    return fn


@click.group()
def main():
    """Implicit grasp evaluation and 6-DoF grasp pose optimization."""


@main.command("gen-scenes")
@_common
@click.option("--count", type=int, default=10, show_default=True)
@click.option("--kind", type=click.Choice(["simple", "clutter"]), default="simple")
@click.option("--shapes", default="box,t_shape", show_default=True)
def gen_scenes(seed, config_path, out, count, kind, shapes):
    """Generate seeded procedural scenes as JSON files."""
    out = _out_dir(out)
    shapes = tuple(shapes.split(","))
    for i in range(count):
        scene = generate_scene(seed + i, kind, shapes=shapes)
        save_scene(scene, out / f"scene_{seed + i:06d}.json")
    click.echo(f"wrote {count} {kind} scenes to {out}")


@main.command("gen-dataset")
@_common
@click.option("--count", type=int, default=128, show_default=True)
@click.option("--shapes", default="box,t_shape", show_default=True)
def gen_dataset(seed, config_path, out, count, shapes):
    """Generate a behavior-cloning dataset (one demonstration per scene)."""
    out = _out_dir(out)
    cfg = TrainConfig(**{**_load_config(config_path).get("train", {}), "seed": seed})
    rng = np.random.default_rng(seed)
    shapes = tuple(shapes.split(","))
    scenes = [generate_scene(seed + i, "simple", shapes=shapes) for i in range(count)]
    dataset = build_dataset(scenes, cfg, rng)
    path = out / "dataset.json"
    save_dataset(dataset, path)
    click.echo(f"wrote dataset of {count} scenes to {path}")


@main.command("train")
@_common
@click.option("--dataset", "dataset_path", type=click.Path(exists=True), required=True)
@click.option("--heldout", "heldout_path", type=click.Path(exists=True), default=None)
def train_cmd(seed, config_path, out, dataset_path, heldout_path):
    """Train the grasp evaluator; writes weights, a loss trace and a curve."""
    out = _out_dir(out)
    cfg = TrainConfig(**{**_load_config(config_path).get("train", {}), "seed": seed})
    dataset = load_dataset(dataset_path)
    weights, losses = train_evaluator(dataset, cfg)
    save_weights(weights, out / "weights.bin")
    save_loss_trace(losses, out / "loss_trace.csv")
    plots.render_loss_curve(losses, out / "loss_curve.png")
    click.echo(f"final loss {losses[-1]:.6f}; weights at {out / 'weights.bin'}")
    if heldout_path:
        acc, auc = evaluate_classifier(weights, load_dataset(heldout_path))
        click.echo(f"held-out accuracy {acc:.4f}, AUC {auc:.4f}")


def _field_for(scene, field_kind, weights_path, tau):
    if field_kind == "learned":
        if not weights_path:
            raise click.UsageError("--weights is required with --field learned")
        return LearnedField(load_weights(weights_path), scene)
    return OracleField(scene, tau)


@main.command("optimize")
@_common
@click.option("--scene", "scene_path", type=click.Path(exists=True), required=True)
@click.option("--field", "field_kind", type=click.Choice(["oracle", "learned"]), default="oracle")
@click.option("--weights", "weights_path", type=click.Path(exists=True), default=None)
@click.option("--tau", type=float, default=0.25, show_default=True)
def optimize_cmd(seed, config_path, out, scene_path, field_kind, weights_path, tau):
    """Optimize a grasp pose on one scene; writes the best pose and the trace."""
    out = _out_dir(out)
    scene = load_scene(scene_path)
    field = _field_for(scene, field_kind, weights_path, tau)
    ocfg = bench.run_config_from_dict(_load_config(config_path)).optimize
    best, trace = run_optimize(field, scene.workspace, ocfg, np.random.default_rng(seed))
    result = {
        "position": best.position.tolist(),
        "quaternion": best.orientation.tolist(),
        "value": float(trace.values[trace.best_index, -1]),
    }
    (out / "best_pose.json").write_text(json.dumps(result, indent=2) + "\n")
    save_trace(trace, out / "trace.txt")
    click.echo(json.dumps(result))


def _bench_cmd(task, runner):
    @main.command(f"bench-{task}")
    @_common
    @click.option("--field", "field_kind", type=click.Choice(["oracle", "learned"]), default=None)
    @click.option("--weights", "weights_path", type=click.Path(exists=True), default=None)
    @click.option("--trials", type=int, default=None)
    def cmd(seed, config_path, out, field_kind, weights_path, trials, _runner=runner, _task=task):
        out = _out_dir(out)
        data = _load_config(config_path)
        data["seed"] = seed
        if field_kind:
            data["field_kind"] = field_kind
        if weights_path:
            data["weights_path"] = weights_path
        if trials is not None:
            data["trials" if _task != "clutter" else "episodes"] = trials
        cfg = bench.run_config_from_dict(data)
        report = _runner(cfg)
        path = bench.export_report(report, out / f"report_{_task}.json")
        click.echo(bench.format_report_table(report))
        click.echo(f"report written to {path}")

    cmd.__name__ = f"bench_{task}"
    return cmd


_bench_cmd("simple", bench.run_simple)
_bench_cmd("clutter", bench.run_clutter)
_bench_cmd("heldout", bench.run_heldout)


@main.command("slice")
@_common
@click.option("--scene", "scene_path", type=click.Path(exists=True), required=True)
@click.option("--field", "field_kind", type=click.Choice(["oracle", "learned"]), default="oracle")
@click.option("--weights", "weights_path", type=click.Path(exists=True), default=None)
@click.option("--tau", type=float, default=0.25, show_default=True)
@click.option("--dims", default="tx,ty", show_default=True)
@click.option("--extent", type=float, default=0.05, show_default=True)
@click.option("--resolution", type=int, default=41, show_default=True)
@click.option("--center", default=None, help="x,y,z,qw,qx,qy,qz (default: a demonstrated grasp)")
def slice_cmd(
    seed, config_path, out, scene_path, field_kind, weights_path, tau, dims, extent, resolution, center
):
    """Export a 2-D grasp-value slice: text matrix, metadata and heatmap."""
    out = _out_dir(out)
    scene = load_scene(scene_path)
    field = _field_for(scene, field_kind, weights_path, tau)
    if center:
        vals = [float(v) for v in center.split(",")]
        if len(vals) != 7:
            raise click.UsageError("--center needs 7 comma-separated values")
        center_pose = Pose6(np.array(vals[:3]), normalize_quaternion(np.array(vals[3:])))
    else:
        center_pose = demonstrate_grasp(scene, np.random.default_rng(seed))
    dims = tuple(dims.split(","))
    grid = slice_values(field, center_pose, dims, extent, resolution)
    prefix = out / f"slice_{dims[0]}_{dims[1]}"
    save_slice(grid, center_pose, dims, extent, resolution, prefix)
    meta = json.loads(prefix.with_suffix(".meta.json").read_text())
    plots.render_slice_heatmap(grid, meta, prefix.with_suffix(".png"))
    click.echo(f"slice written to {prefix}.txt (max value {grid.max():.4f})")


if __name__ == "__main__":
    main()
