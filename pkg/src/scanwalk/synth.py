"""Procedural generator of densely sampled synthetic scenes with exact ground truth.

Scenes are closed rooms containing axis-aligned colored boxes. Cameras sit
on a rectangular grid of rotation points and sample a full turn in fixed
yaw increments, mimicking a robot that visits discrete points and turns in
place. Rendering is z-buffered splatting of densely sampled box surfaces,
which keeps an exact analytic ray-cast oracle available for every pixel.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import (
    BoundingBox,
    Intrinsics,
    PointCloud,
    ScenePose,
    mask_box,
    project_point,
    project_points,
    quat_from_yaw_pitch,
)
from .sceneio import (
    FrameRecord,
    InstanceRecord,
    SceneManifest,
    write_depth_png,
    read_depth_png,
    _dump_json,
)


class SynthError(ValueError):
    pass


DEFAULT_INTRINSICS = Intrinsics(fx=300.0, fy=300.0, cx=160.0, cy=120.0, width=320, height=240)

FACE_KEYS = ("+x", "-x", "+y", "-y", "+z", "-z")


@dataclass(frozen=True)
class Box3D:
    """Axis-aligned parallelepiped given by center and full size."""

    center: Tuple[float, float, float]
    size: Tuple[float, float, float]

    @property
    def lo(self) -> np.ndarray:
        return np.array(self.center) - np.array(self.size) / 2.0

    @property
    def hi(self) -> np.ndarray:
        return np.array(self.center) + np.array(self.size) / 2.0


@dataclass(frozen=True)
class SynthObject:
    """A labeled instance: a colored box, optionally with per-face colors."""

    instance_id: str
    box: Box3D
    color: Tuple[int, int, int] = (180, 60, 60)
    face_colors: Optional[Dict[str, Tuple[int, int, int]]] = None

    def color_of_face(self, face: str) -> Tuple[int, int, int]:
        if self.face_colors and face in self.face_colors:
            return self.face_colors[face]
        return self.color


@dataclass(frozen=True)
class SynthOccluder:
    """Unlabeled solid structure (interior wall, divider, furniture slab)."""

    box: Box3D
    color: Tuple[int, int, int] = (120, 120, 120)


@dataclass
class SynthSceneSpec:
    """Everything needed to generate one synthetic scene deterministically."""

    scene_id: str = "synth"
    room_size: Tuple[float, float, float] = (4.0, 3.0, 2.5)
    objects: List[SynthObject] = field(default_factory=list)
    occluders: List[SynthOccluder] = field(default_factory=list)
    grid_spacing: float = 0.30
    rotation_step_deg: float = 30.0
    grid_margin: float = 0.45
    grid_extent: Optional[Tuple[float, float, float, float]] = None  # x0, x1, y0, y1
    camera_height: float = 1.2
    intrinsics: Intrinsics = DEFAULT_INTRINSICS
    surface_pitch: float = 0.005
    cloud_points_per_instance: int = 800
    position_jitter: float = 0.0
    yaw_jitter_deg: float = 0.0
    zero_fraction: float = 0.0
    inflate_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.grid_spacing <= 0:
            raise SynthError("grid spacing must be positive")
        if self.rotation_step_deg <= 0 or 360.0 % self.rotation_step_deg != 0:
            raise SynthError("rotation step must divide 360")
        room = np.array(self.room_size)
        if np.any(room <= 0):
            raise SynthError("room extents must be positive")
        for obj in self.objects:
            if np.any(obj.box.lo < -1e-9) or np.any(obj.box.hi > room + 1e-9):
                raise SynthError(f"object {obj.instance_id!r} extends outside the room")

    def yaw_angles(self) -> List[float]:
        n = int(round(360.0 / self.rotation_step_deg))
        return [i * self.rotation_step_deg for i in range(n)]


# -- camera grid -------------------------------------------------------------


def _point_in_any_box(point: np.ndarray, boxes: Sequence[Box3D]) -> bool:
    for box in boxes:
        if np.all(point >= box.lo - 1e-9) and np.all(point <= box.hi + 1e-9):
            return True
    return False


def grid_positions(spec: SynthSceneSpec) -> np.ndarray:
    """Rotation-point locations (N, 2) on the scene's rectangular grid."""
    if spec.grid_extent is not None:
        x0, x1, y0, y1 = spec.grid_extent
    else:
        x0, y0 = spec.grid_margin, spec.grid_margin
        x1 = spec.room_size[0] - spec.grid_margin
        y1 = spec.room_size[1] - spec.grid_margin
    xs = np.arange(x0, x1 + 1e-9, spec.grid_spacing)
    ys = np.arange(y0, y1 + 1e-9, spec.grid_spacing)
    solids = [o.box for o in spec.objects] + [o.box for o in spec.occluders]
    points = []
    for y in ys:
        for x in xs:
            p = np.array([x, y, spec.camera_height])
            if not _point_in_any_box(p, solids):
                points.append([x, y])
    if not points:
        raise SynthError("no grid points fall inside the room")
    return np.array(points)


def grid_poses(spec: SynthSceneSpec) -> List[ScenePose]:
    """All camera poses of the scene: every grid point at every yaw angle.

    Frame ids encode grid point and yaw index and sort in generation order.
    Optional jitter perturbs each frame independently, imitating poses
    recovered by reconstruction rather than surveyed ones.
    """
    rng = np.random.default_rng(spec.seed)
    poses = []
    for p_idx, (x, y) in enumerate(grid_positions(spec)):
        for a_idx, yaw in enumerate(spec.yaw_angles()):
            px, py = x, y
            if spec.position_jitter > 0:
                px += rng.normal(0, spec.position_jitter)
                py += rng.normal(0, spec.position_jitter)
            if spec.yaw_jitter_deg > 0:
                yaw = yaw + rng.normal(0, spec.yaw_jitter_deg)
            poses.append(
                ScenePose(
                    frame_id=f"p{p_idx:03d}_a{a_idx:02d}",
                    position=np.array([px, py, spec.camera_height]),
                    orientation=quat_from_yaw_pitch(yaw),
                    intrinsics=spec.intrinsics,
                )
            )
    return poses


# -- surface sampling ---------------------------------------------------------


def _sample_face(lo, hi, axis: int, at: float, pitch: float) -> np.ndarray:
    """Sample a rectangle lying on plane axis=at, spanning the other two axes."""
    other = [i for i in range(3) if i != axis]
    n0 = max(1, int(math.ceil((hi[other[0]] - lo[other[0]]) / pitch)))
    n1 = max(1, int(math.ceil((hi[other[1]] - lo[other[1]]) / pitch)))
    c0 = lo[other[0]] + (np.arange(n0) + 0.5) * (hi[other[0]] - lo[other[0]]) / n0
    c1 = lo[other[1]] + (np.arange(n1) + 0.5) * (hi[other[1]] - lo[other[1]]) / n1
    g0, g1 = np.meshgrid(c0, c1, indexing="ij")
    pts = np.empty((n0 * n1, 3))
    pts[:, axis] = at
    pts[:, other[0]] = g0.ravel()
    pts[:, other[1]] = g1.ravel()
    return pts


def sample_box_surface(box: Box3D, pitch: float) -> Tuple[np.ndarray, List[str]]:
    """Points covering all six faces of a box plus the face key of each point."""
    lo, hi = box.lo, box.hi
    chunks, faces = [], []
    for axis, key_pos, key_neg in ((0, "+x", "-x"), (1, "+y", "-y"), (2, "+z", "-z")):
        for at, key in ((hi[axis], key_pos), (lo[axis], key_neg)):
            pts = _sample_face(lo, hi, axis, at, pitch)
            chunks.append(pts)
            faces.extend([key] * len(pts))
    return np.vstack(chunks), faces


def _object_point_soup(spec: SynthSceneSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Render points of the labeled objects: (points, colors, owner index)."""
    pts_list, col_list, own_list = [], [], []
    for idx, obj in enumerate(spec.objects):
        pts, faces = sample_box_surface(obj.box, spec.surface_pitch)
        cols = np.array([obj.color_of_face(f) for f in faces], dtype=np.uint8)
        pts_list.append(pts)
        col_list.append(cols)
        own_list.append(np.full(len(pts), idx, dtype=np.int32))
    if not pts_list:
        return np.zeros((0, 3)), np.zeros((0, 3), dtype=np.uint8), np.zeros(0, dtype=np.int32)
    return np.vstack(pts_list), np.vstack(col_list), np.concatenate(own_list)


# -- rendering ----------------------------------------------------------------


def render_points(
    points: np.ndarray,
    colors: np.ndarray,
    owners: np.ndarray,
    pose: ScenePose,
    pitch: Optional[float] = None,
    max_splat_radius: int = 6,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Z-buffered splat render of sampled surfaces.

    When a sampling pitch is given, each point splats a square covering
    its true projected footprint (radius grows as the surface nears the
    camera), so sampled surfaces stay hole-free at any range. Returns
    (rgb, depth z_cam in float meters with inf where empty, owner map);
    owner is -2 where nothing landed. Ties at identical depth resolve to
    the lowest point index, keeping renders bit-deterministic.
    """
    intr = pose.intrinsics
    uv, z = project_points(points, pose)
    ok = z > 1e-9
    u, v, z_ok = uv[ok, 0], uv[ok, 1], z[ok]
    iu0 = np.floor(u).astype(np.int64)
    iv0 = np.floor(v).astype(np.int64)
    src0 = np.nonzero(ok)[0]

    if pitch is None:
        radii = np.zeros(len(z_ok), dtype=np.int64)
    else:
        width_px = pitch * max(intr.fx, intr.fy) / z_ok
        radii = np.clip(np.ceil((width_px - 1.0) / 2.0), 0, max_splat_radius).astype(np.int64)

    pix_parts, z_parts, src_parts = [], [], []
    for r in np.unique(radii):
        sel = radii == r
        biu, biv, bz, bsrc = iu0[sel], iv0[sel], z_ok[sel], src0[sel]
        for du in range(-r, r + 1):
            for dv in range(-r, r + 1):
                ju = biu + du
                jv = biv + dv
                inb = (ju >= 0) & (ju < intr.width) & (jv >= 0) & (jv < intr.height)
                pix_parts.append(jv[inb] * intr.width + ju[inb])
                z_parts.append(bz[inb])
                src_parts.append(bsrc[inb])

    rgb = np.zeros((intr.height, intr.width, 3), dtype=np.uint8)
    depth = np.full((intr.height, intr.width), np.inf)
    owner = np.full((intr.height, intr.width), -2, dtype=np.int32)
    if not pix_parts:
        return rgb, depth, owner
    pix = np.concatenate(pix_parts)
    z_in = np.concatenate(z_parts)
    src = np.concatenate(src_parts)
    if len(pix) == 0:
        return rgb, depth, owner

    order = np.lexsort((src, z_in, pix))
    pix_s = pix[order]
    keep = np.concatenate(([True], pix_s[1:] != pix_s[:-1]))
    win_pix = pix_s[keep]
    win_src = src[order][keep]
    win_z = z_in[order][keep]

    rgb.reshape(-1, 3)[win_pix] = colors[win_src]
    depth.reshape(-1)[win_pix] = win_z
    owner.reshape(-1)[win_pix] = owners[win_src]
    return rgb, depth, owner


_SHELL_SHADES = {
    "+x": (200, 200, 205),
    "-x": (205, 200, 200),
    "+y": (198, 204, 198),
    "-y": (204, 204, 196),
    "+z": (230, 230, 230),
    "-z": (150, 150, 150),
}


def _pixel_ray_dirs(pose: ScenePose) -> np.ndarray:
    """World-frame direction per pixel center, scaled so z_cam(dir) = 1."""
    intr = pose.intrinsics
    us, vs = np.meshgrid(np.arange(intr.width) + 0.5, np.arange(intr.height) + 0.5)
    x = (us - intr.cx) / intr.fx
    y = (vs - intr.cy) / intr.fy
    cam = np.stack([x, y, np.ones_like(x)], axis=-1).reshape(-1, 3)
    return cam @ pose.rotation.T


def render_background(spec: SynthSceneSpec, pose: ScenePose) -> Tuple[np.ndarray, np.ndarray]:
    """Exact per-pixel ray cast of the room shell and occluders.

    Ray parameters equal z_cam, so the returned float depth map is the
    depth along the optical axis in meters. Every pixel hits the shell
    since cameras sit inside the closed room.
    """
    intr = pose.intrinsics
    dirs = _pixel_ray_dirs(pose)
    origin = pose.position
    n = dirs.shape[0]
    t_best = np.full(n, np.inf)
    color = np.zeros((n, 3), dtype=np.uint8)

    room_lo = np.zeros(3)
    room_hi = np.array(spec.room_size)
    for axis in range(3):
        for bound, sign in ((room_hi[axis], "+"), (room_lo[axis], "-")):
            key = sign + "xyz"[axis]
            d = dirs[:, axis]
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (bound - origin[axis]) / d
            hit = np.isfinite(t) & (t > 1e-9)
            point = origin + dirs * t[:, None]
            for o in (i for i in range(3) if i != axis):
                hit &= (point[:, o] >= room_lo[o] - 1e-9) & (point[:, o] <= room_hi[o] + 1e-9)
            better = hit & (t < t_best)
            t_best[better] = t[better]
            color[better] = _SHELL_SHADES[key]

    for occ in spec.occluders:
        lo, hi = occ.box.lo, occ.box.hi
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (lo[None, :] - origin[None, :]) / dirs
            tb = (hi[None, :] - origin[None, :]) / dirs
        t_near = np.nanmax(np.minimum(ta, tb), axis=1)
        t_far = np.nanmin(np.maximum(ta, tb), axis=1)
        hit = (t_far >= np.maximum(t_near, 1e-9)) & (t_near > 1e-9)
        better = hit & (t_near < t_best)
        t_best[better] = t_near[better]
        color[better] = occ.color

    return color.reshape(intr.height, intr.width, 3), t_best.reshape(intr.height, intr.width)


def render_frame(
    spec: SynthSceneSpec,
    soup: Tuple[np.ndarray, np.ndarray, np.ndarray],
    pose: ScenePose,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full frame: splatted object surfaces composited over the exact background.

    Returns (rgb, depth_mm uint16, owner map with -1 for structure).
    """
    points, colors, owners = soup
    obj_rgb, obj_depth, obj_owner = render_points(
        points, colors, owners, pose, pitch=spec.surface_pitch
    )
    bg_rgb, bg_depth = render_background(spec, pose)

    object_wins = obj_depth <= bg_depth
    rgb = np.where(object_wins[:, :, None], obj_rgb, bg_rgb)
    owner = np.where(object_wins, obj_owner, -1).astype(np.int32)
    depth_m = np.where(object_wins, obj_depth, bg_depth)
    finite = np.isfinite(depth_m)
    depth = np.zeros(depth_m.shape, dtype=np.uint16)
    depth[finite] = np.clip(np.round(depth_m[finite] * 1000.0), 1, 65535).astype(np.uint16)
    return rgb, depth, owner


# -- ground truth ---------------------------------------------------------------


@dataclass
class GroundTruth:
    """Exact render-derived ground truth for a synthetic scene."""

    object_ids: List[str]
    owner_maps: Dict[str, np.ndarray]
    true_depth: Dict[str, np.ndarray]

    def mask(self, frame_id: str, instance_id: str) -> np.ndarray:
        idx = self.object_ids.index(instance_id)
        return self.owner_maps[frame_id] == idx

    def visible_count(self, frame_id: str, instance_id: str) -> int:
        return int(self.mask(frame_id, instance_id).sum())

    def box(self, frame_id: str, instance_id: str) -> Optional[BoundingBox]:
        return mask_box(self.mask(frame_id, instance_id), instance_id)

    def visibility_records(self) -> dict:
        frames = {}
        for fid in sorted(self.owner_maps):
            entry = {}
            for iid in self.object_ids:
                count = self.visible_count(fid, iid)
                if count == 0:
                    continue
                box = self.box(fid, iid)
                entry[iid] = {
                    "visible_pixels": count,
                    "box": [box.xmin, box.ymin, box.xmax, box.ymax],
                }
            frames[fid] = entry
        return {"frames": frames}


def generate_scene(spec: SynthSceneSpec) -> Tuple[SceneManifest, GroundTruth]:
    """Render one frame per (grid point, yaw) and collect exact ground truth.

    When the spec asks for depth corruption, the manifest frames carry the
    corrupted maps and GroundTruth keeps the clean renders.
    """
    poses = grid_poses(spec)
    soup = _object_point_soup(spec)
    manifest = SceneManifest(scene_id=spec.scene_id, scan_id="1")
    gt = GroundTruth(
        object_ids=[o.instance_id for o in spec.objects], owner_maps={}, true_depth={}
    )

    corrupt_rng = np.random.default_rng(spec.seed + 1)
    for pose in poses:
        rgb, depth, owner = render_frame(spec, soup, pose)
        gt.owner_maps[pose.frame_id] = owner
        gt.true_depth[pose.frame_id] = depth
        emitted = depth
        if spec.zero_fraction > 0 or spec.inflate_fraction > 0:
            emitted = corrupt_depth(
                depth,
                spec.zero_fraction,
                spec.inflate_fraction,
                seed=int(corrupt_rng.integers(0, 2**31)),
            )
        manifest.add_frame(FrameRecord(pose=pose, rgb=rgb, depth=emitted))

    cloud_rng = np.random.default_rng(spec.seed + 2)
    for idx, obj in enumerate(spec.objects):
        surf, _ = sample_box_surface(obj.box, spec.surface_pitch)
        n = min(spec.cloud_points_per_instance, len(surf))
        pick = cloud_rng.choice(len(surf), size=n, replace=False)
        manifest.add_instance(
            InstanceRecord(
                instance_id=obj.instance_id,
                name=obj.instance_id,
                cloud=PointCloud(points=surf[np.sort(pick)], instance_id=obj.instance_id),
            )
        )
    return manifest, gt


def save_ground_truth(gt: GroundTruth, root: Path) -> None:
    root = Path(root)
    gt_dir = root / "ground_truth"
    (gt_dir / "depth").mkdir(parents=True, exist_ok=True)
    (gt_dir / "owner").mkdir(parents=True, exist_ok=True)
    (gt_dir / "visibility.json").write_text(_dump_json(gt.visibility_records()))
    (gt_dir / "objects.json").write_text(_dump_json({"object_ids": gt.object_ids}))
    for fid, depth in gt.true_depth.items():
        write_depth_png(gt_dir / "depth" / f"{fid}.png", depth)
    for fid, owner in gt.owner_maps.items():
        write_depth_png(gt_dir / "owner" / f"{fid}.png", (owner + 2).astype(np.uint16))


def load_ground_truth(root: Path) -> GroundTruth:
    root = Path(root)
    gt_dir = root / "ground_truth"
    object_ids = json.loads((gt_dir / "objects.json").read_text())["object_ids"]
    gt = GroundTruth(object_ids=object_ids, owner_maps={}, true_depth={})
    for path in sorted((gt_dir / "depth").glob("*.png")):
        gt.true_depth[path.stem] = read_depth_png(path)
    for path in sorted((gt_dir / "owner").glob("*.png")):
        gt.owner_maps[path.stem] = read_depth_png(path).astype(np.int32) - 2
    return gt


# -- depth corruption -----------------------------------------------------------


def corrupt_depth(
    depth: np.ndarray,
    zero_fraction: float,
    inflate_fraction: float,
    seed: int,
    inflate_range: Tuple[float, float] = (1.5, 3.0),
) -> np.ndarray:
    """Knock out and inflate a deterministic random subset of valid pixels.

    zero_fraction of the valid pixels become 0 (missing) and a disjoint
    inflate_fraction get multiplied by a factor drawn from inflate_range,
    imitating specular dropouts and overshoots.
    """
    if not (0 <= zero_fraction <= 1 and 0 <= inflate_fraction <= 1):
        raise SynthError("corruption fractions must lie in [0, 1]")
    if zero_fraction + inflate_fraction > 1:
        raise SynthError("corruption fractions must sum to at most 1")
    rng = np.random.default_rng(seed)
    out = depth.copy()
    valid = np.nonzero(out.reshape(-1) > 0)[0]
    n_zero = int(math.floor(zero_fraction * len(valid)))
    n_inflate = int(math.floor(inflate_fraction * len(valid)))
    picked = rng.permutation(valid)
    flat = out.reshape(-1)
    flat[picked[:n_zero]] = 0
    inflate_idx = picked[n_zero : n_zero + n_inflate]
    factors = rng.uniform(inflate_range[0], inflate_range[1], size=len(inflate_idx))
    flat[inflate_idx] = np.clip(
        np.round(flat[inflate_idx].astype(np.float64) * factors), 1, 65535
    ).astype(np.uint16)
    return out


# -- analytic visibility oracle ---------------------------------------------------


class Visibility(Enum):
    VISIBLE = "visible"
    OCCLUDED = "occluded"
    OUT_OF_VIEW = "out-of-view"


def _ray_hits_box(origin: np.ndarray, target: np.ndarray, box: Box3D, shrink: float) -> bool:
    """True when the open segment origin -> target passes through the box interior.

    The box is shrunk by `shrink` on every side so points lying exactly on
    a surface do not self-occlude at grazing angles.
    """
    lo = box.lo + shrink
    hi = box.hi - shrink
    if np.any(lo >= hi):
        return False
    d = target - origin
    t0, t1 = 0.0, 1.0
    for axis in range(3):
        if abs(d[axis]) < 1e-12:
            if origin[axis] < lo[axis] or origin[axis] > hi[axis]:
                return False
            continue
        ta = (lo[axis] - origin[axis]) / d[axis]
        tb = (hi[axis] - origin[axis]) / d[axis]
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
        if t0 > t1:
            return False
    seg_len = float(np.linalg.norm(d))
    if seg_len < 1e-12:
        return False
    # occluding only when the entry point sits measurably before the target
    return t0 < 1.0 - (1e-4 / seg_len) and t1 > t0


def raycast_visibility(
    point, pose: ScenePose, spec: SynthSceneSpec, shrink: float = 5e-4
) -> Visibility:
    """Exact analytic visibility of a world point from a camera.

    Tests projection bounds first, then the open line of sight against
    every solid in the scene (objects and occluders; the room shell cannot
    occlude interior segments).
    """
    point = np.asarray(point, dtype=np.float64)
    proj = project_point(point, pose)
    if proj is None:
        return Visibility.OUT_OF_VIEW
    u, v, _ = proj
    intr = pose.intrinsics
    if not (0 <= u < intr.width and 0 <= v < intr.height):
        return Visibility.OUT_OF_VIEW
    solids = [o.box for o in spec.objects] + [o.box for o in spec.occluders]
    for box in solids:
        if _ray_hits_box(pose.position, point, box, shrink):
            return Visibility.OCCLUDED
    return Visibility.VISIBLE


# -- instance turntable views and backgrounds -------------------------------------


def render_object_views(
    obj: SynthObject,
    intrinsics: Intrinsics = DEFAULT_INTRINSICS,
    yaw_steps: int = 12,
    pitch_deg: float = 12.0,
    distances: Sequence[float] = (0.55, 0.8),
    pitch: float = 0.004,
    margin_px: int = 2,
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Orbit renders of a single object on an empty background.

    Returns (rgb crop, boolean mask crop) pairs, the synthetic stand-in
    for turntable product imagery with masks.
    """
    pts, faces = sample_box_surface(obj.box, pitch)
    cols = np.array([obj.color_of_face(f) for f in faces], dtype=np.uint8)
    owners = np.zeros(len(pts), dtype=np.int32)
    center = np.array(obj.box.center)
    views = []
    for dist in distances:
        for i in range(yaw_steps):
            orbit = math.radians(i * 360.0 / yaw_steps)
            offset = np.array(
                [
                    -dist * math.cos(orbit),
                    -dist * math.sin(orbit),
                    dist * math.tan(math.radians(pitch_deg)),
                ]
            )
            cam_pos = center + offset
            yaw_deg = math.degrees(orbit)
            pose = ScenePose(
                frame_id=f"view_{len(views):03d}",
                position=cam_pos,
                orientation=quat_from_yaw_pitch(yaw_deg, pitch_deg),
                intrinsics=intrinsics,
            )
            rgb, _depth, owner = render_points(pts, cols, owners, pose, pitch=pitch)
            mask = owner == 0
            box = mask_box(mask)
            if box is None:
                continue
            x0 = max(0, box.xmin - margin_px)
            y0 = max(0, box.ymin - margin_px)
            x1 = min(intrinsics.width, box.xmax + margin_px)
            y1 = min(intrinsics.height, box.ymax + margin_px)
            views.append((rgb[y0:y1, x0:x1].copy(), mask[y0:y1, x0:x1].copy()))
    return views


def make_backgrounds(
    count: int, size: Tuple[int, int] = (240, 320), seed: int = 0
) -> List[np.ndarray]:
    """Random smooth color-block images used as compositing backgrounds."""
    rng = np.random.default_rng(seed)
    h, w = size
    images = []
    for _ in range(count):
        coarse = rng.integers(0, 256, size=(6, 8, 3), dtype=np.uint8)
        img = np.kron(coarse, np.ones((math.ceil(h / 6), math.ceil(w / 8), 1), dtype=np.uint8))
        img = img[:h, :w]
        noise = rng.integers(-12, 13, size=img.shape, dtype=np.int16)
        images.append(np.clip(img.astype(np.int16) + noise, 0, 255).astype(np.uint8))
    return images


# -- spec serialization --------------------------------------------------------


def spec_to_dict(spec: SynthSceneSpec) -> dict:
    intr = spec.intrinsics
    return {
        "scene_id": spec.scene_id,
        "room_size": list(spec.room_size),
        "objects": [
            {
                "instance_id": o.instance_id,
                "center": list(o.box.center),
                "size": list(o.box.size),
                "color": list(o.color),
                "face_colors": {k: list(v) for k, v in (o.face_colors or {}).items()} or None,
            }
            for o in spec.objects
        ],
        "occluders": [
            {"center": list(o.box.center), "size": list(o.box.size), "color": list(o.color)}
            for o in spec.occluders
        ],
        "grid_spacing": spec.grid_spacing,
        "rotation_step_deg": spec.rotation_step_deg,
        "grid_margin": spec.grid_margin,
        "grid_extent": list(spec.grid_extent) if spec.grid_extent else None,
        "camera_height": spec.camera_height,
        "intrinsics": {
            "fx": intr.fx,
            "fy": intr.fy,
            "cx": intr.cx,
            "cy": intr.cy,
            "width": intr.width,
            "height": intr.height,
        },
        "surface_pitch": spec.surface_pitch,
        "cloud_points_per_instance": spec.cloud_points_per_instance,
        "position_jitter": spec.position_jitter,
        "yaw_jitter_deg": spec.yaw_jitter_deg,
        "zero_fraction": spec.zero_fraction,
        "inflate_fraction": spec.inflate_fraction,
        "seed": spec.seed,
    }


def spec_from_dict(data: dict) -> SynthSceneSpec:
    objects = [
        SynthObject(
            instance_id=o["instance_id"],
            box=Box3D(center=tuple(o["center"]), size=tuple(o["size"])),
            color=tuple(o.get("color", (180, 60, 60))),
            face_colors={k: tuple(v) for k, v in o["face_colors"].items()}
            if o.get("face_colors")
            else None,
        )
        for o in data.get("objects", [])
    ]
    occluders = [
        SynthOccluder(
            box=Box3D(center=tuple(o["center"]), size=tuple(o["size"])),
            color=tuple(o.get("color", (120, 120, 120))),
        )
        for o in data.get("occluders", [])
    ]
    intr = data.get("intrinsics")
    intrinsics = (
        Intrinsics(
            fx=intr["fx"],
            fy=intr["fy"],
            cx=intr["cx"],
            cy=intr["cy"],
            width=intr["width"],
            height=intr["height"],
        )
        if intr
        else DEFAULT_INTRINSICS
    )
    kwargs = {
        k: data[k]
        for k in (
            "scene_id",
            "grid_spacing",
            "rotation_step_deg",
            "grid_margin",
            "camera_height",
            "surface_pitch",
            "cloud_points_per_instance",
            "position_jitter",
            "yaw_jitter_deg",
            "zero_fraction",
            "inflate_fraction",
            "seed",
        )
        if k in data
    }
    return SynthSceneSpec(
        room_size=tuple(data.get("room_size", (4.0, 3.0, 2.5))),
        objects=objects,
        occluders=occluders,
        grid_extent=tuple(data["grid_extent"]) if data.get("grid_extent") else None,
        intrinsics=intrinsics,
        **kwargs,
    )


def load_spec(path: Path) -> SynthSceneSpec:
    return spec_from_dict(json.loads(Path(path).read_text()))


def save_spec(spec: SynthSceneSpec, path: Path) -> None:
    Path(path).write_text(_dump_json(spec_to_dict(spec)))
