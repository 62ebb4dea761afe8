"""Detection and classification evaluation plus diagnostic analyses.

Detections arrive as plain records (any external detector can be scored),
get matched greedily to ground truth per instance at an IoU threshold,
and produce per-instance average precision. The diagnostic operations
relate detector scores to camera geometry: score versus camera position,
and score change versus camera displacement between frame pairs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from .core import BoundingBox, InstanceAnnotation
from .sceneio import SceneManifest, _dump_json


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class Detection:
    frame_id: str
    instance_id: str
    box: BoundingBox
    score: float


def _precision_envelope_ap(recall: np.ndarray, precision: np.ndarray) -> float:
    """Area under the monotone precision envelope (all-points interpolation)."""
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    changed = np.nonzero(mrec[1:] != mrec[:-1])[0] + 1
    return float(np.sum((mrec[changed] - mrec[changed - 1]) * mpre[changed]))


def _eleven_point_ap(recall: np.ndarray, precision: np.ndarray) -> float:
    ap = 0.0
    for r in np.linspace(0.0, 1.0, 11):
        mask = recall >= r
        ap += float(precision[mask].max()) if mask.any() else 0.0
    return ap / 11.0


def average_precision(
    detections: Sequence[Detection],
    ground_truth: Sequence[InstanceAnnotation],
    iou_threshold: float = 0.5,
    eleven_point: bool = False,
) -> Tuple[Dict[str, float], float]:
    """Per-instance AP and their unweighted mean.

    Detections are ranked by descending score and matched greedily to the
    highest-IoU unmatched ground-truth box of the same instance in the
    same frame. Instances without ground truth do not enter the mean;
    instances with ground truth but no detections score 0.
    """
    gt_by_instance: Dict[str, Dict[str, List[BoundingBox]]] = {}
    for ann in ground_truth:
        gt_by_instance.setdefault(ann.instance_id, {}).setdefault(ann.frame_id, []).append(
            ann.box
        )

    det_by_instance: Dict[str, List[Detection]] = {}
    for det in detections:
        det_by_instance.setdefault(det.instance_id, []).append(det)

    ap_per_instance: Dict[str, float] = {}
    for iid in sorted(gt_by_instance):
        gt_frames = gt_by_instance[iid]
        n_gt = sum(len(boxes) for boxes in gt_frames.values())
        dets = sorted(
            det_by_instance.get(iid, []),
            key=lambda d: (-d.score, d.frame_id, d.box.xmin, d.box.ymin),
        )
        if not dets:
            ap_per_instance[iid] = 0.0
            continue
        matched: Dict[Tuple[str, int], bool] = {}
        tp = np.zeros(len(dets))
        for rank, det in enumerate(dets):
            candidates = gt_frames.get(det.frame_id, [])
            best_iou, best_idx = 0.0, -1
            for g_idx, g_box in enumerate(candidates):
                if matched.get((det.frame_id, g_idx)):
                    continue
                iou = det.box.iou(g_box)
                if iou > best_iou:
                    best_iou, best_idx = iou, g_idx
            if best_idx >= 0 and best_iou >= iou_threshold:
                matched[(det.frame_id, best_idx)] = True
                tp[rank] = 1.0
        cum_tp = np.cumsum(tp)
        cum_fp = np.cumsum(1.0 - tp)
        recall = cum_tp / n_gt
        precision = cum_tp / np.maximum(cum_tp + cum_fp, 1e-12)
        ap = (
            _eleven_point_ap(recall, precision)
            if eleven_point
            else _precision_envelope_ap(recall, precision)
        )
        ap_per_instance[iid] = ap

    mean_ap = float(np.mean(list(ap_per_instance.values()))) if ap_per_instance else 0.0
    return ap_per_instance, mean_ap


# -- diagnostic analyses ------------------------------------------------------


def score_position_map(
    scene: SceneManifest, instance_id: str, scores: Dict[str, float]
) -> List[dict]:
    """One record per annotated frame: camera x, y, yaw, and the frame's score."""
    if instance_id not in scene.instances:
        raise EvaluationError(f"unknown instance {instance_id!r}")
    records = []
    for fid in scene.frames_with_instance(instance_id):
        if fid not in scores:
            continue
        pose = scene.pose(fid)
        records.append(
            {
                "frame_id": fid,
                "x": float(pose.position[0]),
                "y": float(pose.position[1]),
                "yaw_deg": float(pose.yaw_deg),
                "score": float(scores[fid]),
            }
        )
    return records


def score_distance_sensitivity(
    scene: SceneManifest, scores_by_instance: Dict[str, Dict[str, float]]
) -> List[dict]:
    """|score difference| against camera distance for every scored frame pair.

    Instances never detected anywhere (every score zero) are excluded.
    """
    records = []
    for iid in sorted(scores_by_instance):
        frame_scores = scores_by_instance[iid]
        if not any(s > 0 for s in frame_scores.values()):
            continue
        fids = sorted(frame_scores)
        for i in range(len(fids)):
            for j in range(i + 1, len(fids)):
                a, b = fids[i], fids[j]
                dist = float(
                    np.linalg.norm(scene.pose(a).position - scene.pose(b).position)
                )
                records.append(
                    {
                        "instance_id": iid,
                        "frame_a": a,
                        "frame_b": b,
                        "distance_m": dist,
                        "abs_score_delta": abs(frame_scores[a] - frame_scores[b]),
                    }
                )
    return records


# -- report emission ------------------------------------------------------------


def write_csv(path: Path, headers: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(headers)
        for row in rows:
            writer.writerow(row)


def read_detections_csv(path: Path) -> List[Detection]:
    """Schema: frame_id, instance_id, xmin, ymin, xmax, ymax, score."""
    detections = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"frame_id", "instance_id", "xmin", "ymin", "xmax", "ymax", "score"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise EvaluationError(f"{path}: detection CSV must have columns {sorted(required)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                box = BoundingBox(
                    xmin=int(row["xmin"]),
                    ymin=int(row["ymin"]),
                    xmax=int(row["xmax"]),
                    ymax=int(row["ymax"]),
                    instance_id=row["instance_id"],
                )
                detections.append(
                    Detection(
                        frame_id=row["frame_id"],
                        instance_id=row["instance_id"],
                        box=box,
                        score=float(row["score"]),
                    )
                )
            except (ValueError, KeyError) as exc:
                raise EvaluationError(f"{path}:{lineno}: bad detection row: {exc}") from exc
    return detections


def accuracy_table_rows(
    results_by_method: Dict[str, Dict[int, float]], budgets: Sequence[int]
) -> Tuple[List[str], List[List]]:
    """Methods-by-budgets accuracy layout (one row per method)."""
    headers = ["method"] + [str(b) for b in budgets]
    rows = []
    for method in results_by_method:
        rows.append([method] + [f"{results_by_method[method][b]:.4f}" for b in budgets])
    return headers, rows


def emit_report(
    tables: Dict[str, Tuple[Sequence[str], Sequence[Sequence]]], out_dir: Path
) -> List[Path]:
    """Write every table as CSV plus an index; deterministic file order."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(tables):
        headers, rows = tables[name]
        path = out_dir / f"{name}.csv"
        write_csv(path, headers, rows)
        written.append(path)
    index = {"artifacts": [p.name for p in written]}
    index_path = out_dir / "index.json"
    index_path.write_text(_dump_json(index))
    return written + [index_path]
