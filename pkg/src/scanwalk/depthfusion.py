"""Multi-view depth improvement.

A frame's depth map is fused with its neighbors': each neighbor's valid
pixels are lifted to 3D and re-projected into the target camera, and every
target pixel keeps the smallest depth seen. Zeros mean "missing" and never
participate in the minimum. Sensor dropouts get filled by neighbors, and
overshoot values (specular surfaces read too far) get knocked down, since
wrong values are characteristically too large. Remaining holes are closed
by directional interpolation.
"""

from __future__ import annotations

from typing import Dict, List, Optional

import numpy as np

from .core import back_project, project_points
from .sceneio import SceneManifest, write_depth_png


def select_fusion_neighbors(target: str, scene: SceneManifest, k: int) -> List[str]:
    """The k frames most likely to see the target frame's surfaces.

    Overlap score is the cosine of the inter-view angle (clamped at zero)
    divided by 1 + camera distance in meters. Ties break by frame_id.
    """
    if k <= 0:
        return []
    pose_t = scene.pose(target)
    scored = []
    for fid in scene.frame_ids():
        if fid == target:
            continue
        pose = scene.frames[fid].pose
        cos_angle = max(0.0, float(np.dot(pose_t.forward, pose.forward)))
        dist = float(np.linalg.norm(pose.position - pose_t.position))
        scored.append((-cos_angle / (1.0 + dist), fid))
    scored.sort()
    return [fid for _, fid in scored[:k]]


def interpolate_holes(depth_mm: np.ndarray) -> np.ndarray:
    """Fill zero pixels with the distance-weighted average of the nearest
    valid pixel along each of the 8 compass directions.

    Pixels with no valid pixel along any direction stay 0; an all-zero map
    comes back unchanged.
    """
    depth = depth_mm.astype(np.float64)
    valid = depth > 0
    if valid.all() or not valid.any():
        return depth_mm.copy()

    h, w = depth.shape
    weight_sum = np.zeros_like(depth)
    value_sum = np.zeros_like(depth)

    def accumulate(val: np.ndarray, dist: np.ndarray) -> None:
        found = np.isfinite(dist) & (dist > 0)
        weight = np.where(found, 1.0 / np.maximum(dist, 1e-9), 0.0)
        value_sum[found] += val[found] * weight[found]
        weight_sum[found] += weight[found]

    def axis_scan(flip_axis: Optional[int], transpose: bool) -> None:
        # nearest valid value walking left-to-right along rows after the
        # requested reorientation
        d = depth.T if transpose else depth
        m = valid.T if transpose else valid
        if flip_axis is not None:
            d = np.flip(d, axis=flip_axis)
            m = np.flip(m, axis=flip_axis)
        val = np.full(d.shape, np.nan)
        dist = np.full(d.shape, np.inf)
        run_val = np.full(d.shape[0], np.nan)
        run_dist = np.full(d.shape[0], np.inf)
        for j in range(d.shape[1]):
            col_valid = m[:, j]
            run_dist = run_dist + 1.0
            run_val = np.where(col_valid, d[:, j], run_val)
            run_dist = np.where(col_valid, 0.0, run_dist)
            val[:, j] = run_val
            dist[:, j] = run_dist
        if flip_axis is not None:
            val = np.flip(val, axis=flip_axis)
            dist = np.flip(dist, axis=flip_axis)
        if transpose:
            val, dist = val.T, dist.T
        accumulate(val, dist)

    def diag_scan(down: bool, right: bool) -> None:
        d = depth if down else np.flip(depth, axis=0)
        m = valid if down else np.flip(valid, axis=0)
        if not right:
            d = np.flip(d, axis=1)
            m = np.flip(m, axis=1)
        val = np.full(d.shape, np.nan)
        dist = np.full(d.shape, np.inf)
        prev_val = np.full(w, np.nan)
        prev_dist = np.full(w, np.inf)
        for i in range(h):
            shifted_val = np.concatenate(([np.nan], prev_val[:-1]))
            shifted_dist = np.concatenate(([np.inf], prev_dist[:-1])) + 1.0
            row_valid = m[i]
            row_val = np.where(row_valid, d[i], shifted_val)
            row_dist = np.where(row_valid, 0.0, shifted_dist)
            val[i] = row_val
            dist[i] = row_dist
            prev_val, prev_dist = row_val, row_dist
        if not right:
            val = np.flip(val, axis=1)
            dist = np.flip(dist, axis=1)
        if not down:
            val = np.flip(val, axis=0)
            dist = np.flip(dist, axis=0)
        accumulate(val, dist * np.sqrt(2.0))

    axis_scan(None, transpose=False)      # from the west
    axis_scan(1, transpose=False)         # from the east
    axis_scan(None, transpose=True)       # from the north
    axis_scan(1, transpose=True)          # from the south
    diag_scan(down=True, right=True)      # from the northwest
    diag_scan(down=True, right=False)     # from the northeast
    diag_scan(down=False, right=True)     # from the southwest
    diag_scan(down=False, right=False)    # from the southeast

    out = depth.copy()
    holes = ~valid & (weight_sum > 0)
    out[holes] = value_sum[holes] / weight_sum[holes]
    return np.clip(np.round(out), 0, 65535).astype(np.uint16)


def _splat_neighbor(
    best_mm: np.ndarray, neighbor_fid: str, scene: SceneManifest, target_fid: str, radius: int
) -> None:
    pose_n = scene.frames[neighbor_fid].pose
    pose_t = scene.frames[target_fid].pose
    depth_n = scene.load_depth(neighbor_fid)
    h, w = depth_n.shape
    vs, us = np.nonzero(depth_n > 0)
    if len(us) == 0:
        return
    z_m = depth_n[vs, us].astype(np.float64) / 1000.0
    world = back_project(us + 0.5, vs + 0.5, z_m, pose_n)
    uv, z = project_points(world, pose_t)
    ok = z > 1e-9
    iu = np.floor(uv[ok, 0]).astype(np.int64)
    iv = np.floor(uv[ok, 1]).astype(np.int64)
    z_mm = z[ok] * 1000.0
    ht, wt = best_mm.shape
    flat = best_mm.reshape(-1)
    for du in range(-radius, radius + 1):
        for dv in range(-radius, radius + 1):
            ju = iu + du
            jv = iv + dv
            inb = (ju >= 0) & (ju < wt) & (jv >= 0) & (jv < ht)
            np.minimum.at(flat, jv[inb] * wt + ju[inb], z_mm[inb])


def fuse_depth(
    target: str,
    scene: SceneManifest,
    k_neighbors: int = 6,
    splat_radius: int = 0,
    fill_holes: bool = True,
) -> np.ndarray:
    """Improved depth map for one frame (uint16 millimeters).

    Per pixel the result is the minimum over the frame's own valid value
    and every neighbor value projected there; 0 stays "missing" and is
    then closed by interpolate_holes unless fill_holes is off. Valid
    input pixels never increase.
    """
    depth_t = scene.load_depth(target)
    best = np.where(depth_t > 0, depth_t.astype(np.float64), np.inf)
    for fid in select_fusion_neighbors(target, scene, k_neighbors):
        _splat_neighbor(best, fid, scene, target, splat_radius)
    fused = np.where(np.isinf(best), 0.0, np.round(best))
    fused = np.clip(fused, 0, 65535).astype(np.uint16)
    if fill_holes:
        fused = interpolate_holes(fused)
    return fused


def fuse_scene(
    scene: SceneManifest,
    k_neighbors: int = 6,
    splat_radius: int = 0,
    cache_dir=None,
) -> Dict[str, np.ndarray]:
    """Fuse every frame; optionally persist maps under depth_fused/."""
    fused = {}
    for fid in scene.frame_ids():
        fused[fid] = fuse_depth(fid, scene, k_neighbors=k_neighbors, splat_radius=splat_radius)
    if cache_dir is not None:
        cache_dir.mkdir(parents=True, exist_ok=True)
        for fid, depth in fused.items():
            write_depth_png(cache_dir / f"{fid}.png", depth)
    return fused
