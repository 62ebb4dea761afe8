"""Scene persistence: a canonical on-disk layout plus external-format ingestion.

Canonical layout, relative to a scene root directory:

    scene.json                   scene_id, scan_id, instance names
    poses.jsonl                  one frame record per line, sorted by frame_id
    rgb/<frame_id>.png           8-bit RGB
    depth/<frame_id>.png         16-bit grayscale, millimeters, 0 = missing
    instances/<instance_id>.xyz  ASCII "x y z" per line, meters, world frame
    annotations.json             projected 2D boxes (optional)
    movegraph.json               movement pointers (optional)
    depth_fused/<frame_id>.png   fused depth cache (optional)
    ground_truth/                synthetic ground truth (optional)

Floating-point metadata is serialized as decimal strings with 9
significant digits, so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from .core import (
    BoundingBox,
    GeometryError,
    InstanceAnnotation,
    Intrinsics,
    PointCloud,
    RGBDFrame,
    ScenePose,
)
from .movegraph import Action, MoveGraph


class SceneIOError(Exception):
    """Base class for persistence failures."""


class SceneLoadError(SceneIOError):
    """A referenced file is missing or unreadable."""


class SceneParseError(SceneIOError):
    """A record is syntactically or semantically malformed."""


class SceneIntegrityError(SceneIOError):
    """Cross-references between records do not resolve."""


class UnknownFormatError(SceneIOError):
    """No ingestion adapter registered for the requested format tag."""


def fmt_float(x: float) -> str:
    """Decimal string with 9 significant digits; stable under reparsing."""
    return f"{float(x):.9g}"


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ": "), indent=1) + "\n"


def write_rgb_png(path: Path, rgb: np.ndarray) -> None:
    Image.fromarray(np.ascontiguousarray(rgb.astype(np.uint8)), mode="RGB").save(path)


def read_rgb_png(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def write_depth_png(path: Path, depth_mm: np.ndarray) -> None:
    arr = np.ascontiguousarray(depth_mm.astype(np.uint16))
    Image.fromarray(arr).save(path)  # uint16 maps to 16-bit grayscale PNG


def read_depth_png(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.dtype == np.int32:  # PIL decodes 16-bit gray PNG as mode "I" on some versions
        arr = arr.astype(np.uint16)
    if arr.dtype != np.uint16:
        raise SceneParseError(f"{path}: expected 16-bit grayscale depth, got {arr.dtype}")
    return arr


@dataclass
class FrameRecord:
    """One frame's pose plus its pixel data, on disk or in memory."""

    pose: ScenePose
    rgb_path: Optional[Path] = None
    depth_path: Optional[Path] = None
    rgb: Optional[np.ndarray] = None
    depth: Optional[np.ndarray] = None


@dataclass
class InstanceRecord:
    instance_id: str
    name: str
    cloud_path: Optional[Path] = None
    cloud: Optional[PointCloud] = None


class SceneManifest:
    """A scene's metadata with lazily loadable frames and clouds."""

    def __init__(self, scene_id: str, scan_id: str, root: Optional[Path] = None):
        self.scene_id = scene_id
        self.scan_id = scan_id
        self.root = Path(root) if root is not None else None
        self.frames: Dict[str, FrameRecord] = {}
        self.instances: Dict[str, InstanceRecord] = {}
        self.movegraph: Optional[MoveGraph] = None
        self.annotations: List[InstanceAnnotation] = []
        self._ann_index: Dict[Tuple[str, str], InstanceAnnotation] = {}
        self._frames_by_instance: Dict[str, List[str]] = {}

    # -- construction -----------------------------------------------------

    def add_frame(self, record: FrameRecord) -> None:
        fid = record.pose.frame_id
        if fid in self.frames:
            raise SceneIntegrityError(f"duplicate frame_id {fid!r}")
        self.frames[fid] = record

    def add_instance(self, record: InstanceRecord) -> None:
        if record.instance_id in self.instances:
            raise SceneIntegrityError(f"duplicate instance_id {record.instance_id!r}")
        self.instances[record.instance_id] = record

    def set_annotations(self, annotations: Sequence[InstanceAnnotation]) -> None:
        self.annotations = list(annotations)
        self._ann_index = {}
        self._frames_by_instance = {}
        for ann in self.annotations:
            if ann.frame_id not in self.frames:
                raise SceneIntegrityError(f"annotation references unknown frame {ann.frame_id!r}")
            if ann.instance_id not in self.instances:
                raise SceneIntegrityError(
                    f"annotation references unknown instance {ann.instance_id!r}"
                )
            self._ann_index[(ann.frame_id, ann.instance_id)] = ann
            self._frames_by_instance.setdefault(ann.instance_id, []).append(ann.frame_id)
        for frames in self._frames_by_instance.values():
            frames.sort()

    # -- queries ----------------------------------------------------------

    def frame_ids(self) -> List[str]:
        return sorted(self.frames)

    def pose(self, frame_id: str) -> ScenePose:
        try:
            return self.frames[frame_id].pose
        except KeyError:
            raise SceneIntegrityError(f"unknown frame_id {frame_id!r}") from None

    def poses(self) -> List[ScenePose]:
        return [self.frames[f].pose for f in self.frame_ids()]

    def annotation_for(self, frame_id: str, instance_id: str) -> Optional[InstanceAnnotation]:
        return self._ann_index.get((frame_id, instance_id))

    def frames_with_instance(self, instance_id: str) -> List[str]:
        return list(self._frames_by_instance.get(instance_id, []))

    # -- pixel data -------------------------------------------------------

    def _frame(self, frame_id: str) -> FrameRecord:
        try:
            return self.frames[frame_id]
        except KeyError:
            raise SceneIntegrityError(f"unknown frame_id {frame_id!r}") from None

    def load_rgb(self, frame_id: str) -> np.ndarray:
        rec = self._frame(frame_id)
        if rec.rgb is None:
            if rec.rgb_path is None:
                raise SceneLoadError(f"frame {frame_id!r} has no rgb data or path")
            rec.rgb = read_rgb_png(rec.rgb_path)
        return rec.rgb

    def load_depth(self, frame_id: str) -> np.ndarray:
        rec = self._frame(frame_id)
        if rec.depth is None:
            if rec.depth_path is None:
                raise SceneLoadError(f"frame {frame_id!r} has no depth data or path")
            rec.depth = read_depth_png(rec.depth_path)
        return rec.depth

    def load_frame(self, frame_id: str) -> RGBDFrame:
        return RGBDFrame(
            frame_id=frame_id,
            rgb=self.load_rgb(frame_id),
            depth=self.load_depth(frame_id),
        )

    def load_cloud(self, instance_id: str) -> PointCloud:
        try:
            rec = self.instances[instance_id]
        except KeyError:
            raise SceneIntegrityError(f"unknown instance_id {instance_id!r}") from None
        if rec.cloud is None:
            if rec.cloud_path is None:
                raise SceneLoadError(f"instance {instance_id!r} has no cloud data or path")
            rec.cloud = _read_cloud(rec.cloud_path, instance_id)
        return rec.cloud

    def fused_depth_path(self, frame_id: str) -> Optional[Path]:
        if self.root is None:
            return None
        return self.root / "depth_fused" / f"{frame_id}.png"


# -- serialization ---------------------------------------------------------


def _pose_to_record(pose: ScenePose) -> dict:
    intr = pose.intrinsics
    return {
        "frame_id": pose.frame_id,
        "position": [fmt_float(v) for v in pose.position],
        "quaternion_wxyz": [fmt_float(v) for v in pose.orientation],
        "intrinsics": {
            "fx": fmt_float(intr.fx),
            "fy": fmt_float(intr.fy),
            "cx": fmt_float(intr.cx),
            "cy": fmt_float(intr.cy),
            "width": intr.width,
            "height": intr.height,
        },
    }


def _pose_from_record(record: dict, where: str) -> ScenePose:
    try:
        intr = record["intrinsics"]
        intrinsics = Intrinsics(
            fx=float(intr["fx"]),
            fy=float(intr["fy"]),
            cx=float(intr["cx"]),
            cy=float(intr["cy"]),
            width=int(intr["width"]),
            height=int(intr["height"]),
        )
        return ScenePose(
            frame_id=str(record["frame_id"]),
            position=np.array([float(v) for v in record["position"]]),
            orientation=np.array([float(v) for v in record["quaternion_wxyz"]]),
            intrinsics=intrinsics,
        )
    except (KeyError, TypeError, ValueError, GeometryError) as exc:
        raise SceneParseError(f"{where}: bad pose record: {exc}") from exc


def _read_cloud(path: Path, instance_id: str) -> PointCloud:
    if not path.exists():
        raise SceneLoadError(f"missing point cloud file {path}")
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise SceneParseError(f"{path}:{lineno}: expected 'x y z', got {line!r}")
        rows.append([float(v) for v in parts])
    if not rows:
        raise SceneParseError(f"{path}: empty point cloud")
    return PointCloud(points=np.array(rows), instance_id=instance_id)


def _write_cloud(path: Path, cloud: PointCloud) -> None:
    lines = [" ".join(fmt_float(v) for v in p) for p in cloud.points]
    path.write_text("\n".join(lines) + "\n")


def annotations_to_records(annotations: Sequence[InstanceAnnotation]) -> List[dict]:
    records = []
    for ann in sorted(annotations, key=lambda a: (a.frame_id, a.instance_id)):
        records.append(
            {
                "frame_id": ann.frame_id,
                "instance_id": ann.instance_id,
                "xmin": ann.box.xmin,
                "ymin": ann.box.ymin,
                "xmax": ann.box.xmax,
                "ymax": ann.box.ymax,
                "difficulty": ann.box.difficulty,
                "visible_point_count": ann.visible_point_count,
            }
        )
    return records


def annotations_from_records(records: Sequence[dict], where: str) -> List[InstanceAnnotation]:
    annotations = []
    for i, rec in enumerate(records):
        try:
            box = BoundingBox(
                xmin=int(rec["xmin"]),
                ymin=int(rec["ymin"]),
                xmax=int(rec["xmax"]),
                ymax=int(rec["ymax"]),
                instance_id=str(rec["instance_id"]),
                difficulty=int(rec["difficulty"]),
            )
            annotations.append(
                InstanceAnnotation(
                    frame_id=str(rec["frame_id"]),
                    instance_id=str(rec["instance_id"]),
                    box=box,
                    visible_point_count=int(rec["visible_point_count"]),
                )
            )
        except (KeyError, TypeError, ValueError, GeometryError) as exc:
            raise SceneParseError(f"{where}: bad annotation record {i}: {exc}") from exc
    return annotations


def movegraph_to_records(graph: MoveGraph) -> List[dict]:
    records = []
    for (frame_id, action), target in sorted(graph.items(), key=lambda e: (e[0][0], int(e[0][1]))):
        records.append(
            {"frame_id": frame_id, "action": action.name.lower(), "target_frame_id": target}
        )
    return records


def movegraph_from_records(records: Sequence[dict], where: str) -> MoveGraph:
    graph = MoveGraph()
    for i, rec in enumerate(records):
        try:
            action = Action[str(rec["action"]).upper()]
            graph.add(str(rec["frame_id"]), action, str(rec["target_frame_id"]))
        except (KeyError, ValueError) as exc:
            raise SceneParseError(f"{where}: bad movegraph record {i}: {exc}") from exc
    return graph


def save_scene(manifest: SceneManifest, root: Path) -> None:
    """Write a scene in the canonical layout.

    Frames must have pixel data either in memory or loadable from their
    recorded paths. Metadata files are written deterministically so a
    second save of the same content is byte-identical.
    """
    root = Path(root)
    (root / "rgb").mkdir(parents=True, exist_ok=True)
    (root / "depth").mkdir(parents=True, exist_ok=True)
    if manifest.instances:
        (root / "instances").mkdir(exist_ok=True)

    scene_meta = {
        "scene_id": manifest.scene_id,
        "scan_id": manifest.scan_id,
        "instances": [
            {"instance_id": rec.instance_id, "name": rec.name}
            for rec in sorted(manifest.instances.values(), key=lambda r: r.instance_id)
        ],
    }
    (root / "scene.json").write_text(_dump_json(scene_meta))

    with open(root / "poses.jsonl", "w") as fh:
        for fid in manifest.frame_ids():
            fh.write(json.dumps(_pose_to_record(manifest.frames[fid].pose), sort_keys=True))
            fh.write("\n")

    for fid in manifest.frame_ids():
        rgb_path = root / "rgb" / f"{fid}.png"
        depth_path = root / "depth" / f"{fid}.png"
        write_rgb_png(rgb_path, manifest.load_rgb(fid))
        write_depth_png(depth_path, manifest.load_depth(fid))
        manifest.frames[fid].rgb_path = rgb_path
        manifest.frames[fid].depth_path = depth_path

    for iid in sorted(manifest.instances):
        cloud_path = root / "instances" / f"{iid}.xyz"
        _write_cloud(cloud_path, manifest.load_cloud(iid))
        manifest.instances[iid].cloud_path = cloud_path

    (root / "annotations.json").write_text(
        _dump_json({"annotations": annotations_to_records(manifest.annotations)})
    )
    if manifest.movegraph is not None:
        (root / "movegraph.json").write_text(
            _dump_json({"edges": movegraph_to_records(manifest.movegraph)})
        )
    manifest.root = root


def load_scene(root: Path) -> SceneManifest:
    """Load a canonical scene directory; pixel data stays on disk until used."""
    root = Path(root)
    scene_path = root / "scene.json"
    poses_path = root / "poses.jsonl"
    for required in (scene_path, poses_path):
        if not required.exists():
            raise SceneLoadError(f"missing required file {required}")

    try:
        scene_meta = json.loads(scene_path.read_text())
    except json.JSONDecodeError as exc:
        raise SceneParseError(f"{scene_path}: {exc}") from exc

    manifest = SceneManifest(
        scene_id=str(scene_meta.get("scene_id", root.name)),
        scan_id=str(scene_meta.get("scan_id", "1")),
        root=root,
    )

    for lineno, line in enumerate(poses_path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SceneParseError(f"{poses_path}:{lineno}: {exc}") from exc
        pose = _pose_from_record(record, f"{poses_path}:{lineno}")
        rgb_path = root / "rgb" / f"{pose.frame_id}.png"
        depth_path = root / "depth" / f"{pose.frame_id}.png"
        for p in (rgb_path, depth_path):
            if not p.exists():
                raise SceneLoadError(f"missing file {p}")
        manifest.add_frame(FrameRecord(pose=pose, rgb_path=rgb_path, depth_path=depth_path))

    for inst in scene_meta.get("instances", []):
        iid = str(inst["instance_id"])
        cloud_path = root / "instances" / f"{iid}.xyz"
        if not cloud_path.exists():
            raise SceneLoadError(f"missing file {cloud_path}")
        manifest.add_instance(
            InstanceRecord(instance_id=iid, name=str(inst.get("name", iid)), cloud_path=cloud_path)
        )

    ann_path = root / "annotations.json"
    if ann_path.exists():
        try:
            records = json.loads(ann_path.read_text())["annotations"]
        except (json.JSONDecodeError, KeyError) as exc:
            raise SceneParseError(f"{ann_path}: {exc}") from exc
        manifest.set_annotations(annotations_from_records(records, str(ann_path)))

    graph_path = root / "movegraph.json"
    if graph_path.exists():
        try:
            records = json.loads(graph_path.read_text())["edges"]
        except (json.JSONDecodeError, KeyError) as exc:
            raise SceneParseError(f"{graph_path}: {exc}") from exc
        graph = movegraph_from_records(records, str(graph_path))
        for (fid, _), target in graph.items():
            if fid not in manifest.frames or target not in manifest.frames:
                raise SceneIntegrityError(
                    f"{graph_path}: pointer ({fid} -> {target}) references unknown frame"
                )
        manifest.movegraph = graph

    return manifest


def validate_scene(root: Path) -> List[str]:
    """Structural integrity report for a scene directory; empty list when clean."""
    problems: List[str] = []
    try:
        manifest = load_scene(root)
    except SceneIOError as exc:
        return [str(exc)]

    for fid in manifest.frame_ids():
        rec = manifest.frames[fid]
        intr = rec.pose.intrinsics
        try:
            rgb = manifest.load_rgb(fid)
            depth = manifest.load_depth(fid)
        except (SceneIOError, OSError) as exc:
            problems.append(f"frame {fid}: unreadable pixel data: {exc}")
            continue
        if rgb.shape[:2] != (intr.height, intr.width):
            problems.append(f"frame {fid}: rgb shape {rgb.shape[:2]} != intrinsics")
        if depth.shape != (intr.height, intr.width):
            problems.append(f"frame {fid}: depth shape {depth.shape} != intrinsics")
        rec.rgb = None  # keep validation memory flat
        rec.depth = None

    if manifest.movegraph is not None:
        for (fid, action), target in manifest.movegraph.items():
            if target not in manifest.frames:
                problems.append(f"movegraph: ({fid}, {action.name}) -> missing frame {target}")
            if target == fid:
                problems.append(f"movegraph: self-pointer at ({fid}, {action.name})")

    for ann in manifest.annotations:
        intr = manifest.pose(ann.frame_id).intrinsics
        if ann.box.xmax > intr.width or ann.box.ymax > intr.height:
            problems.append(
                f"annotation ({ann.frame_id}, {ann.instance_id}): box exceeds image bounds"
            )
    return problems


# -- external-format ingestion ----------------------------------------------


def _ingest_perframe_json(root: Path) -> SceneManifest:
    """Layout with one '<stem>.pose.json' next to each '<stem>.png' image."""
    root = Path(root)
    manifest = SceneManifest(scene_id=root.name, scan_id="1", root=None)
    pose_files = sorted(root.glob("*.pose.json"))
    if not pose_files:
        raise SceneLoadError(f"{root}: no '*.pose.json' records found")
    for pose_file in pose_files:
        stem = pose_file.name[: -len(".pose.json")]
        try:
            record = json.loads(pose_file.read_text())
        except json.JSONDecodeError as exc:
            raise SceneParseError(f"{pose_file}: {exc}") from exc
        for key in ("position", "quaternion_wxyz", "intrinsics"):
            if key not in record:
                raise SceneParseError(f"{pose_file}: missing required field {key!r}")
        record = dict(record, frame_id=stem)
        pose = _pose_from_record(record, str(pose_file))
        rgb_path = root / f"{stem}.png"
        depth_path = root / f"{stem}.depth.png"
        if not rgb_path.exists():
            raise SceneLoadError(f"missing file {rgb_path}")
        rgb = read_rgb_png(rgb_path)
        if depth_path.exists():
            depth = read_depth_png(depth_path)
        else:
            depth = np.zeros(rgb.shape[:2], dtype=np.uint16)
        manifest.add_frame(FrameRecord(pose=pose, rgb=rgb, depth=depth))
    return manifest


EXTERNAL_FORMATS = {
    "perframe-json": _ingest_perframe_json,
}


def ingest_external(root: Path, format_tag: str) -> SceneManifest:
    """Convert an external scene layout into an in-memory canonical manifest."""
    try:
        adapter = EXTERNAL_FORMATS[format_tag]
    except KeyError:
        supported = ", ".join(sorted(EXTERNAL_FORMATS))
        raise UnknownFormatError(
            f"unknown format_tag {format_tag!r}; supported: {supported}"
        ) from None
    return adapter(Path(root))
