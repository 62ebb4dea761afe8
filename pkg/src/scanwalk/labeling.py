"""Occlusion-aware 2D labels from per-instance 3D point clouds.

A cloud point counts as visible in a frame when it projects inside the
image in front of the camera and its depth does not exceed the fused
depth at that pixel by more than a small slack. Without the depth test,
clouds would label straight through walls and occluding furniture.
The emitted box spans an inner percentile band of the visible points
per axis, which rejects stray reconstruction outliers.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .core import BoundingBox, InstanceAnnotation, PointCloud, project_points
from .depthfusion import fuse_depth
from .sceneio import SceneManifest


class LabelingError(ValueError):
    pass


@dataclass(frozen=True)
class LabelParams:
    occlusion_slack: float = 0.05      # meters added to fused depth before the visibility test
    percentile_lo: float = 2.0
    percentile_hi: float = 98.0
    min_visible_points: int = 20


def assign_difficulty(box: BoundingBox) -> int:
    """Size-based difficulty: 1 for at least 100x75, 2 for at least 50x30, else 3."""
    if box.width >= 100 and box.height >= 75:
        return 1
    if box.width >= 50 and box.height >= 30:
        return 2
    return 3


def project_instance(
    cloud: PointCloud,
    frame_id: str,
    scene: SceneManifest,
    fused_depth: np.ndarray,
    params: LabelParams = LabelParams(),
) -> Optional[InstanceAnnotation]:
    """Project one instance's cloud into one frame, or None when too little is visible.

    Pixels whose fused depth is 0 (no measurement anywhere) cannot witness
    occlusion and are treated as free space.
    """
    if len(cloud) == 0:
        raise LabelingError("empty point cloud")
    pose = scene.pose(frame_id)
    intr = pose.intrinsics
    uv, z = project_points(cloud.points, pose)
    ok = z > 1e-9
    u, v, z_ok = uv[ok, 0], uv[ok, 1], z[ok]
    iu = np.floor(u).astype(np.int64)
    iv = np.floor(v).astype(np.int64)
    inb = (iu >= 0) & (iu < intr.width) & (iv >= 0) & (iv < intr.height)
    if not inb.any():
        return None
    u, v, z_ok = u[inb], v[inb], z_ok[inb]
    iu, iv = iu[inb], iv[inb]

    surface = fused_depth[iv, iu].astype(np.float64) / 1000.0
    visible = (surface == 0) | (z_ok <= surface + params.occlusion_slack)
    count = int(visible.sum())
    if count < params.min_visible_points:
        return None

    u_lo, u_hi = np.percentile(u[visible], [params.percentile_lo, params.percentile_hi])
    v_lo, v_hi = np.percentile(v[visible], [params.percentile_lo, params.percentile_hi])
    box = BoundingBox(
        xmin=int(math.floor(u_lo)),
        ymin=int(math.floor(v_lo)),
        xmax=int(math.floor(u_hi)) + 1,
        ymax=int(math.floor(v_hi)) + 1,
        instance_id=cloud.instance_id,
    ).clipped(intr.width, intr.height)
    if box is None:
        return None
    box.difficulty = assign_difficulty(box)
    return InstanceAnnotation(
        frame_id=frame_id,
        instance_id=cloud.instance_id,
        box=box,
        visible_point_count=count,
    )


def label_scene(
    scene: SceneManifest,
    params: LabelParams = LabelParams(),
    fused_depths: Optional[Dict[str, np.ndarray]] = None,
    k_neighbors: int = 6,
    jobs: Optional[int] = None,
) -> Tuple[List[InstanceAnnotation], Dict]:
    """Annotate every (instance, frame) pair; returns annotations plus summary stats.

    fused_depths may carry precomputed maps; missing frames are fused on
    the fly with k_neighbors. Parallelism defaults to the SCANWALK_JOBS
    environment variable.
    """
    if jobs is None:
        jobs = int(os.environ.get("SCANWALK_JOBS", "1"))
    clouds = [scene.load_cloud(iid) for iid in sorted(scene.instances)]
    fused_depths = dict(fused_depths or {})

    def depth_for(fid: str) -> np.ndarray:
        if fid not in fused_depths:
            fused_depths[fid] = fuse_depth(fid, scene, k_neighbors=k_neighbors)
        return fused_depths[fid]

    def annotate_frame(fid: str) -> List[InstanceAnnotation]:
        try:
            fused = depth_for(fid)
            results = []
            for cloud in clouds:
                ann = project_instance(cloud, fid, scene, fused, params)
                if ann is not None:
                    results.append(ann)
            return results
        except Exception as exc:
            raise LabelingError(f"frame {fid}: {exc}") from exc

    frame_ids = scene.frame_ids()
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_frame = list(pool.map(annotate_frame, frame_ids))
    else:
        per_frame = [annotate_frame(fid) for fid in frame_ids]

    annotations = [ann for frame_anns in per_frame for ann in frame_anns]
    by_instance: Dict[str, int] = {iid: 0 for iid in sorted(scene.instances)}
    by_difficulty: Dict[int, int] = {1: 0, 2: 0, 3: 0}
    for ann in annotations:
        by_instance[ann.instance_id] += 1
        by_difficulty[ann.box.difficulty] += 1
    stats = {
        "total_boxes": len(annotations),
        "boxes_per_instance": by_instance,
        "boxes_per_difficulty": by_difficulty,
        "frames": len(frame_ids),
    }
    return annotations, stats
