"""Command-line entry point orchestrating every pipeline stage.

Numeric defaults live in one table, overridable by a JSON config file
(--config) and then by explicit flags; flag > file > default. Exit codes:
0 success, 1 user error, 2 data integrity, 3 internal error. Every
failure prints a single machine-parseable line to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import synth
from .depthfusion import fuse_scene
from .environment import EpisodeError
from .evaluation import (
    EvaluationError,
    accuracy_table_rows,
    average_precision,
    emit_report,
    read_detections_csv,
    write_csv,
)
from .labeling import LabelingError, LabelParams, label_scene
from .movegraph import (
    DuplicatePoseError,
    MoveGraphError,
    MoveGraphParams,
    build_move_graph,
)
from .plotting import render_curve, render_heatmap
from .policy import (
    LearnedPolicy,
    PolicyError,
    SceneCache,
    TrainConfig,
    baseline_policy,
    evaluate_policy,
    load_policy,
    save_policy,
    train_policy,
)
from .recognition import (
    AugmentationSpec,
    RecognitionError,
    TrainParams,
    load_classifier,
    make_training_set,
    save_classifier,
    train_classifier,
)
from .sceneio import (
    SceneIntegrityError,
    SceneLoadError,
    SceneParseError,
    UnknownFormatError,
    ingest_external,
    load_scene,
    read_rgb_png,
    save_scene,
    validate_scene,
    write_rgb_png,
)

DEFAULTS = {
    "seed": 0,
    "step": 0.30,
    "rot": 30.0,
    "k": 6,
    "eps": 0.05,
    "min_points": 20,
    "T": 5,
    "conf": 0.9,
    "episodes": 3200,
    "budgets": "0,3,5,10,20",
    "iou": 0.5,
}

USER_ERRORS = (
    SceneLoadError,
    UnknownFormatError,
    synth.SynthError,
    RecognitionError,
    PolicyError,
    EvaluationError,
    EpisodeError,
    FileNotFoundError,
    NotADirectoryError,
)
INTEGRITY_ERRORS = (
    SceneParseError,
    SceneIntegrityError,
    DuplicatePoseError,
    MoveGraphError,
    LabelingError,
)


class CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; keep 1 for user errors
        raise CliError(message, code=1)


class _Config:
    """flag > config file > default resolution for numeric settings."""

    def __init__(self, config_path: Optional[str]):
        self.file_values = {}
        if config_path:
            self.file_values = json.loads(Path(config_path).read_text())

    def get(self, args: argparse.Namespace, name: str):
        flag = getattr(args, name.replace("-", "_"), None)
        if flag is not None:
            return flag
        if name in self.file_values:
            return self.file_values[name]
        return DEFAULTS[name]


def _load_scene_checked(path: str):
    scene = load_scene(Path(path))
    return scene


def _parse_budgets(text: str):
    try:
        budgets = [int(b) for b in str(text).split(",") if b != ""]
    except ValueError as exc:
        raise CliError(f"bad --budgets value {text!r}: {exc}") from exc
    if not budgets:
        raise CliError("--budgets must name at least one integer")
    return budgets


# -- subcommands -----------------------------------------------------------------


def cmd_gen_synth(args, cfg: _Config) -> int:
    spec = synth.load_spec(Path(args.spec))
    if args.seed is not None:
        spec.seed = int(args.seed)
    out = Path(args.out)
    manifest, gt = synth.generate_scene(spec)
    save_scene(manifest, out)
    synth.save_ground_truth(gt, out)

    views_root = out / "object_views"
    for obj in spec.objects:
        inst_dir = views_root / obj.instance_id
        inst_dir.mkdir(parents=True, exist_ok=True)
        for i, (crop, mask) in enumerate(
            synth.render_object_views(obj, intrinsics=spec.intrinsics)
        ):
            write_rgb_png(inst_dir / f"view_{i:03d}.png", crop)
            write_rgb_png(
                inst_dir / f"view_{i:03d}.mask.png",
                np.repeat(mask[:, :, None].astype(np.uint8) * 255, 3, axis=2),
            )
    bg_dir = out / "backgrounds"
    bg_dir.mkdir(parents=True, exist_ok=True)
    for i, bg in enumerate(synth.make_backgrounds(24, seed=spec.seed + 17)):
        write_rgb_png(bg_dir / f"bg_{i:02d}.png", bg)
    print(f"wrote scene {spec.scene_id}: {len(manifest.frames)} frames -> {out}")
    return 0


def cmd_ingest(args, cfg: _Config) -> int:
    manifest = ingest_external(Path(args.in_dir), args.format)
    save_scene(manifest, Path(args.out))
    print(f"ingested {len(manifest.frames)} frames -> {args.out}")
    return 0


def cmd_validate(args, cfg: _Config) -> int:
    scene_path = Path(args.scene)
    if not scene_path.is_dir():
        raise CliError(f"scene directory {scene_path} does not exist", code=1)
    problems = validate_scene(scene_path)
    if problems:
        for p in problems:
            print(p)
        raise CliError(f"{len(problems)} integrity violations", code=2)
    print("scene is valid")
    return 0


def cmd_build_graph(args, cfg: _Config) -> int:
    scene = _load_scene_checked(args.scene)
    params = MoveGraphParams(
        target_step=float(cfg.get(args, "step")), rotation_step_deg=float(cfg.get(args, "rot"))
    )
    graph = build_move_graph(scene.poses(), params)
    scene.movegraph = graph
    from .sceneio import movegraph_to_records, _dump_json

    (Path(args.scene) / "movegraph.json").write_text(
        _dump_json({"edges": movegraph_to_records(graph)})
    )
    print(f"wrote {len(graph)} movement pointers")
    return 0


def cmd_fuse_depth(args, cfg: _Config) -> int:
    scene = _load_scene_checked(args.scene)
    k = int(cfg.get(args, "k"))
    fused = fuse_scene(scene, k_neighbors=k, cache_dir=Path(args.scene) / "depth_fused")
    print(f"fused {len(fused)} depth maps with k={k}")
    return 0


def cmd_label(args, cfg: _Config) -> int:
    scene = _load_scene_checked(args.scene)
    params = LabelParams(
        occlusion_slack=float(cfg.get(args, "eps")),
        min_visible_points=int(cfg.get(args, "min_points")),
    )
    fused_dir = Path(args.scene) / "depth_fused"
    fused = {}
    if fused_dir.is_dir():
        from .sceneio import read_depth_png

        for p in fused_dir.glob("*.png"):
            fused[p.stem] = read_depth_png(p)
    annotations, stats = label_scene(scene, params, fused_depths=fused)
    scene.set_annotations(annotations)
    from .sceneio import annotations_to_records, _dump_json

    (Path(args.scene) / "annotations.json").write_text(
        _dump_json({"annotations": annotations_to_records(annotations)})
    )
    print(json.dumps(stats, sort_keys=True))
    return 0


def _load_object_views(objects_dir: Path):
    views = {}
    for inst_dir in sorted(p for p in objects_dir.iterdir() if p.is_dir()):
        pairs = []
        for view_path in sorted(inst_dir.glob("view_*.png")):
            if view_path.name.endswith(".mask.png"):
                continue
            mask_path = view_path.with_name(view_path.stem + ".mask.png")
            if not mask_path.exists():
                raise CliError(f"missing mask for {view_path}")
            crop = read_rgb_png(view_path)
            mask = read_rgb_png(mask_path)[:, :, 0] > 127
            pairs.append((crop, mask))
        if pairs:
            views[inst_dir.name] = pairs
    if not views:
        raise CliError(f"no object views found under {objects_dir}")
    return views


def cmd_train_classifier(args, cfg: _Config) -> int:
    seed = int(cfg.get(args, "seed"))
    views = _load_object_views(Path(args.objects))
    backgrounds = [read_rgb_png(p) for p in sorted(Path(args.backgrounds).glob("*.png"))]
    if not backgrounds:
        raise CliError(f"no backgrounds found under {args.backgrounds}")
    aug = AugmentationSpec(
        scale_range=(0.02, 1.0), crop_jitter=0.1, color_jitter=0.1,
        backgrounds=backgrounds, seed=seed,
    )
    features, labels = make_training_set(views, aug, samples_per_instance=args.samples)
    model = train_classifier(features, labels, TrainParams(seed=seed))
    save_classifier(model, Path(args.out))
    print(f"trained on {len(labels)} samples, train accuracy {model.train_accuracy:.3f}")
    return 0


def _policy_from_spec(policy_spec: str):
    if policy_spec in ("random", "forward"):
        return baseline_policy(policy_spec)
    return LearnedPolicy(load_policy(Path(policy_spec)))


def cmd_train_policy(args, cfg: _Config) -> int:
    classifier = load_classifier(Path(args.classifier))
    caches = [SceneCache(_load_scene_checked(s), classifier) for s in args.scenes]
    config = TrainConfig(
        total_episodes=int(cfg.get(args, "episodes")),
        max_steps=int(cfg.get(args, "T")),
        confidence_threshold=float(cfg.get(args, "conf")),
        seed=int(cfg.get(args, "seed")),
        subtract_mean_reward=bool(args.baseline),
    )
    params, history = train_policy(caches, config)
    save_policy(params, Path(args.out))
    tail = history[-1] if history else None
    if tail:
        print(
            f"trained {len(history)} batches; final mean reward {tail.mean_reward:.3f}, "
            f"accuracy {tail.accuracy:.3f}"
        )
    return 0


def cmd_eval_policy(args, cfg: _Config) -> int:
    classifier = load_classifier(Path(args.classifier))
    caches = [SceneCache(_load_scene_checked(s), classifier) for s in args.scenes]
    budgets = _parse_budgets(cfg.get(args, "budgets"))
    policy = _policy_from_spec(args.policy)
    result = evaluate_policy(
        policy,
        caches,
        budgets,
        confidence_threshold=float(cfg.get(args, "conf")),
        seed=int(cfg.get(args, "seed")),
        max_starts_per_instance=args.max_starts,
    )
    method = getattr(policy, "kind", "learned")
    headers, rows = accuracy_table_rows({method: result.overall}, budgets)
    write_csv(Path(args.out), headers, rows)
    print(json.dumps({"method": method, "overall": {str(k): v for k, v in result.overall.items()}}))
    return 0


def cmd_eval_detections(args, cfg: _Config) -> int:
    scene = _load_scene_checked(args.scene)
    detections = read_detections_csv(Path(args.detections))
    ap, mean_ap = average_precision(
        detections, scene.annotations, iou_threshold=float(cfg.get(args, "iou"))
    )
    rows = [[iid, f"{ap[iid]:.4f}"] for iid in sorted(ap)]
    rows.append(["mAP", f"{mean_ap:.4f}"])
    write_csv(Path(args.out), ["instance_id", "ap"], rows)
    print(f"mAP {mean_ap:.4f} over {len(ap)} instances")
    return 0


def cmd_analyze(args, cfg: _Config) -> int:
    scene = _load_scene_checked(args.scene)
    import csv as _csv

    scores_by_instance: dict = {}
    with open(args.scores, newline="") as fh:
        reader = _csv.DictReader(fh)
        required = {"frame_id", "instance_id", "score"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise CliError(f"scores CSV must have columns {sorted(required)}")
        for row in reader:
            scores_by_instance.setdefault(row["instance_id"], {})[row["frame_id"]] = float(
                row["score"]
            )

    from .evaluation import score_distance_sensitivity, score_position_map

    tables = {}
    if args.kind == "heatmap":
        for iid, frame_scores in sorted(scores_by_instance.items()):
            records = score_position_map(scene, iid, frame_scores)
            tables[f"heatmap_{iid}"] = (
                ["frame_id", "x", "y", "yaw_deg", "score"],
                [[r["frame_id"], r["x"], r["y"], r["yaw_deg"], r["score"]] for r in records],
            )
    else:
        records = score_distance_sensitivity(scene, scores_by_instance)
        tables["sensitivity"] = (
            ["instance_id", "frame_a", "frame_b", "distance_m", "abs_score_delta"],
            [
                [r["instance_id"], r["frame_a"], r["frame_b"], r["distance_m"], r["abs_score_delta"]]
                for r in records
            ],
        )
    written = emit_report(tables, Path(args.out))
    print(f"wrote {len(written)} files to {args.out}")
    return 0


def cmd_plot(args, cfg: _Config) -> int:
    import csv as _csv

    with open(args.in_path, newline="") as fh:
        reader = _csv.DictReader(fh)
        rows = list(reader)
        fields = reader.fieldnames or []
    if args.kind == "heatmap":
        if not {"x", "y", "score"}.issubset(fields):
            raise CliError("heatmap CSV needs columns x, y, score")
        records = [
            {"x": float(r["x"]), "y": float(r["y"]), "score": float(r["score"])} for r in rows
        ]
        render_heatmap(records, Path(args.out))
    else:
        if "method" not in fields:
            raise CliError("curve CSV needs a 'method' column plus budget columns")
        series = {}
        for r in rows:
            series[r["method"]] = {
                int(b): float(r[b]) for b in fields if b != "method" and r[b] != ""
            }
        render_curve(series, Path(args.out))
    print(f"wrote {args.out}")
    return 0


# -- wiring ---------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="scanwalk", description=__doc__)
    parser.add_argument("--config", help="JSON file of default overrides", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a synthetic scene from a spec file")
    p.add_argument("--spec", required=True, help="synthetic scene spec (JSON)")
    p.add_argument("--out", required=True, help="output scene directory")
    p.add_argument("--seed", type=int, default=None, help="override the spec's seed (default 0)")
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("ingest", help="convert an external scene layout to canonical")
    p.add_argument("--format", required=True, help="external format tag (e.g. perframe-json)")
    p.add_argument("--in", dest="in_dir", required=True, help="external scene directory")
    p.add_argument("--out", required=True, help="output scene directory")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("validate", help="integrity-check a scene directory")
    p.add_argument("--scene", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("build-graph", help="derive movement pointers from poses")
    p.add_argument("--scene", required=True)
    p.add_argument("--step", type=float, default=None, help="target translation step in meters (default 0.30)")
    p.add_argument("--rot", type=float, default=None, help="rotation step in degrees (default 30)")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("fuse-depth", help="fuse each frame's depth with its neighbors")
    p.add_argument("--scene", required=True)
    p.add_argument("--k", type=int, default=None, help="number of neighbor frames (default 6)")
    p.set_defaults(func=cmd_fuse_depth)

    p = sub.add_parser("label", help="project instance clouds to 2D boxes")
    p.add_argument("--scene", required=True)
    p.add_argument("--eps", type=float, default=None, help="occlusion slack in meters (default 0.05)")
    p.add_argument("--min-points", dest="min_points", type=int, default=None,
                   help="minimum visible cloud points per box (default 20)")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train-classifier", help="train the instance classifier on composited crops")
    p.add_argument("--objects", required=True, help="directory of per-instance view/mask images")
    p.add_argument("--backgrounds", required=True, help="directory of background images")
    p.add_argument("--out", required=True, help="classifier checkpoint path")
    p.add_argument("--seed", type=int, default=None, help="rng seed (default 0)")
    p.add_argument("--samples", type=int, default=120, help="composited samples per instance (default 120)")
    p.set_defaults(func=cmd_train_classifier)

    p = sub.add_parser("train-policy", help="train the next-move policy with REINFORCE")
    p.add_argument("--scenes", nargs="+", required=True)
    p.add_argument("--classifier", required=True)
    p.add_argument("--out", required=True, help="policy checkpoint path")
    p.add_argument("--T", type=int, default=None, help="max steps per episode (default 5)")
    p.add_argument("--conf", type=float, default=None, help="confidence stop threshold (default 0.9)")
    p.add_argument("--episodes", type=int, default=None, help="total training episodes (default 3200)")
    p.add_argument("--seed", type=int, default=None, help="rng seed (default 0)")
    p.add_argument("--baseline", action="store_true",
                   help="subtract the batch-mean reward before the gradient step")
    p.set_defaults(func=cmd_train_policy)

    p = sub.add_parser("eval-policy", help="accuracy after spending each move budget")
    p.add_argument("--scenes", nargs="+", required=True)
    p.add_argument("--classifier", required=True)
    p.add_argument("--policy", required=True, help="policy checkpoint path, 'random', or 'forward'")
    p.add_argument("--budgets", default=None, help="comma-separated move budgets (default 0,3,5,10,20)")
    p.add_argument("--conf", type=float, default=None, help="confidence stop threshold (default 0.9)")
    p.add_argument("--seed", type=int, default=None, help="rng seed (default 0)")
    p.add_argument("--max-starts", dest="max_starts", type=int, default=None,
                   help="cap on start frames per instance (default: all)")
    p.add_argument("--out", required=True, help="accuracy CSV path")
    p.set_defaults(func=cmd_eval_policy)

    p = sub.add_parser("eval-detections", help="mean average precision of a detection CSV")
    p.add_argument("--scene", required=True)
    p.add_argument("--detections", required=True, help="CSV: frame_id,instance_id,xmin,ymin,xmax,ymax,score")
    p.add_argument("--iou", type=float, default=None, help="match threshold (default 0.5)")
    p.add_argument("--out", required=True, help="per-instance AP CSV path")
    p.set_defaults(func=cmd_eval_detections)

    p = sub.add_parser("analyze", help="score/position heatmap data or score/distance sensitivity")
    p.add_argument("--scene", required=True)
    p.add_argument("--scores", required=True, help="CSV: frame_id,instance_id,score")
    p.add_argument("--kind", choices=("heatmap", "sensitivity"), required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("plot", help="raster plot of an analysis or accuracy CSV")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--kind", choices=("heatmap", "curve"), required=True)
    p.add_argument("--out", required=True, help="output PNG path")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _Config(args.config)
        return args.func(args, cfg)
    except CliError as exc:
        print(f"error: code={exc.code} kind=usage msg={exc}", file=sys.stderr)
        return exc.code
    except INTEGRITY_ERRORS as exc:
        print(f"error: code=2 kind={type(exc).__name__} msg={exc}", file=sys.stderr)
        return 2
    except USER_ERRORS as exc:
        print(f"error: code=1 kind={type(exc).__name__} msg={exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error: code=3 kind={type(exc).__name__} msg={exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
