import json
from pathlib import Path

import numpy as np
import pytest

from scanwalk.core import BoundingBox, InstanceAnnotation, Intrinsics, PointCloud, ScenePose
from scanwalk.core import quat_from_yaw_pitch
from scanwalk.movegraph import Action, MoveGraph
from scanwalk.sceneio import (
    FrameRecord,
    InstanceRecord,
    SceneIntegrityError,
    SceneLoadError,
    SceneManifest,
    SceneParseError,
    UnknownFormatError,
    fmt_float,
    ingest_external,
    load_scene,
    save_scene,
    validate_scene,
    write_depth_png,
    write_rgb_png,
)

INTR = Intrinsics(fx=300.0, fy=300.0, cx=16.0, cy=12.0, width=32, height=24)


def random_manifest(seed: int, n_frames: int = 4, n_instances: int = 2) -> SceneManifest:
    rng = np.random.default_rng(seed)
    manifest = SceneManifest(scene_id=f"scene{seed}", scan_id="1")
    for i in range(n_frames):
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        pose = ScenePose(f"f{i:03d}", rng.uniform(-3, 3, 3), q, INTR)
        rgb = rng.integers(0, 256, size=(24, 32, 3), dtype=np.uint8)
        depth = rng.integers(0, 65536, size=(24, 32), dtype=np.uint16)
        manifest.add_frame(FrameRecord(pose=pose, rgb=rgb, depth=depth))
    for j in range(n_instances):
        cloud = PointCloud(points=rng.uniform(-2, 2, size=(15, 3)), instance_id=f"obj{j}")
        manifest.add_instance(InstanceRecord(instance_id=f"obj{j}", name=f"object {j}", cloud=cloud))
    if n_frames and n_instances:
        manifest.set_annotations(
            [
                InstanceAnnotation(
                    frame_id="f000",
                    instance_id="obj0",
                    box=BoundingBox(1, 2, 10, 12, "obj0", difficulty=3),
                    visible_point_count=25,
                )
            ]
        )
        graph = MoveGraph()
        graph.add("f000", Action.FORWARD, "f001")
        if n_frames > 2:
            graph.add("f001", Action.BACKWARD, "f000")
        manifest.movegraph = graph
    return manifest


def _decimal(values) -> list:
    return [fmt_float(v) for v in np.asarray(values).ravel()]


def manifests_equal(a: SceneManifest, b: SceneManifest) -> bool:
    """Equality with coordinates compared as 9-significant-digit decimal strings."""
    if a.frame_ids() != b.frame_ids() or sorted(a.instances) != sorted(b.instances):
        return False
    for fid in a.frame_ids():
        pa, pb = a.pose(fid), b.pose(fid)
        if _decimal(pa.position) != _decimal(pb.position):
            return False
        if _decimal(pa.orientation) != _decimal(pb.orientation):
            return False
        if pa.intrinsics != pb.intrinsics:
            return False
        if not np.array_equal(a.load_rgb(fid), b.load_rgb(fid)):
            return False
        if not np.array_equal(a.load_depth(fid), b.load_depth(fid)):
            return False
    for iid in a.instances:
        if _decimal(a.load_cloud(iid).points) != _decimal(b.load_cloud(iid).points):
            return False
    if len(a.annotations) != len(b.annotations):
        return False
    ga = dict(a.movegraph.items()) if a.movegraph else None
    gb = dict(b.movegraph.items()) if b.movegraph else None
    return ga == gb


class TestRoundTrip:
    def test_save_load_identity(self, tmp_path):
        for seed in range(3):
            manifest = random_manifest(seed)
            root = tmp_path / f"s{seed}"
            save_scene(manifest, root)
            loaded = load_scene(root)
            assert manifests_equal(manifest, loaded)

    def test_save_load_save_byte_identical(self, tmp_path):
        manifest = random_manifest(7)
        root1 = tmp_path / "a"
        root2 = tmp_path / "b"
        save_scene(manifest, root1)
        loaded = load_scene(root1)
        for fid in loaded.frame_ids():
            loaded.load_rgb(fid)
            loaded.load_depth(fid)
        for iid in loaded.instances:
            loaded.load_cloud(iid)
        save_scene(loaded, root2)
        for name in ("scene.json", "poses.jsonl", "annotations.json", "movegraph.json"):
            assert (root1 / name).read_bytes() == (root2 / name).read_bytes(), name
        for sub in ("instances",):
            for p1 in sorted((root1 / sub).glob("*")):
                assert p1.read_bytes() == (root2 / sub / p1.name).read_bytes()

    def test_depth_boundary_value_survives(self, tmp_path):
        manifest = random_manifest(1, n_frames=1, n_instances=0)
        fid = manifest.frame_ids()[0]
        manifest.frames[fid].depth = np.full((24, 32), 65535, dtype=np.uint16)
        save_scene(manifest, tmp_path / "s")
        loaded = load_scene(tmp_path / "s")
        assert int(loaded.load_depth(fid).max()) == 65535
        assert int(loaded.load_depth(fid).min()) == 65535

    def test_load_frame_bundles_rgb_and_depth(self, tmp_path):
        manifest = random_manifest(12)
        save_scene(manifest, tmp_path / "s")
        loaded = load_scene(tmp_path / "s")
        fid = loaded.frame_ids()[0]
        frame = loaded.load_frame(fid)
        assert frame.frame_id == fid
        assert frame.rgb.shape == (24, 32, 3) and frame.depth.shape == (24, 32)

    def test_minimal_scene(self, tmp_path):
        manifest = random_manifest(2, n_frames=1, n_instances=0)
        save_scene(manifest, tmp_path / "m")
        loaded = load_scene(tmp_path / "m")
        assert len(loaded.frames) == 1
        assert loaded.annotations == []

    def test_generated_scene_round_trips(self, tmp_path, labeled_quad_scene):
        # a rendered synthetic scene (poses, images, clouds, labels, graph)
        # survives save -> load intact
        manifest, _gt = labeled_quad_scene
        root = tmp_path / "generated"
        save_scene(manifest, root)
        loaded = load_scene(root)
        assert manifests_equal(manifest, loaded)
        assert len(loaded.frames) == len(manifest.frames)
        assert len(loaded.annotations) == len(manifest.annotations)

    def test_loading_does_not_mutate_files(self, tmp_path):
        manifest = random_manifest(3)
        root = tmp_path / "s"
        save_scene(manifest, root)
        before = {p: p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}
        loaded = load_scene(root)
        for fid in loaded.frame_ids():
            loaded.load_rgb(fid)
            loaded.load_depth(fid)
        after = {p: p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}
        assert before == after


class TestLoadErrors:
    def test_missing_file_names_path(self, tmp_path):
        manifest = random_manifest(4)
        root = tmp_path / "s"
        save_scene(manifest, root)
        victim = root / "rgb" / "f001.png"
        victim.unlink()
        with pytest.raises(SceneLoadError) as err:
            load_scene(root)
        assert "f001.png" in str(err.value)

    def test_bad_quaternion_norm_is_parse_error(self, tmp_path):
        manifest = random_manifest(5)
        root = tmp_path / "s"
        save_scene(manifest, root)
        lines = (root / "poses.jsonl").read_text().splitlines()
        record = json.loads(lines[0])
        record["quaternion_wxyz"] = ["1.5", "0", "0", "0"]
        lines[0] = json.dumps(record, sort_keys=True)
        (root / "poses.jsonl").write_text("\n".join(lines) + "\n")
        with pytest.raises(SceneParseError) as err:
            load_scene(root)
        assert "poses.jsonl:1" in str(err.value)

    def test_duplicate_frame_id(self, tmp_path):
        manifest = random_manifest(6)
        root = tmp_path / "s"
        save_scene(manifest, root)
        lines = (root / "poses.jsonl").read_text().splitlines()
        lines.append(lines[0])
        (root / "poses.jsonl").write_text("\n".join(lines) + "\n")
        with pytest.raises(SceneIntegrityError):
            load_scene(root)


class TestValidate:
    def test_clean_scene(self, tmp_path):
        save_scene(random_manifest(8), tmp_path / "s")
        assert validate_scene(tmp_path / "s") == []

    def test_dangling_movegraph_pointer(self, tmp_path):
        manifest = random_manifest(9)
        root = tmp_path / "s"
        save_scene(manifest, root)
        graph = json.loads((root / "movegraph.json").read_text())
        graph["edges"].append(
            {"frame_id": "f000", "action": "left", "target_frame_id": "ghost"}
        )
        (root / "movegraph.json").write_text(json.dumps(graph))
        problems = validate_scene(root)
        assert problems and "ghost" in problems[0]


class TestIngest:
    def _make_external(self, root: Path, n: int = 3, drop_intrinsics: bool = False):
        root.mkdir()
        rng = np.random.default_rng(0)
        for i in range(n):
            stem = f"img{i}"
            write_rgb_png(root / f"{stem}.png", rng.integers(0, 255, (24, 32, 3), dtype=np.uint8))
            write_depth_png(root / f"{stem}.depth.png", rng.integers(0, 5000, (24, 32), dtype=np.uint16))
            record = {
                "position": [0.1 * i, 0.0, 1.0],
                "quaternion_wxyz": list(quat_from_yaw_pitch(30.0 * i)),
                "intrinsics": {"fx": 300, "fy": 300, "cx": 16, "cy": 12, "width": 32, "height": 24},
            }
            if drop_intrinsics:
                record.pop("intrinsics")
            (root / f"{stem}.pose.json").write_text(json.dumps(record))

    def test_ingest_preserves_frame_count(self, tmp_path):
        ext = tmp_path / "ext"
        self._make_external(ext, n=5)
        manifest = ingest_external(ext, "perframe-json")
        assert len(manifest.frames) == 5

    def test_unknown_format_lists_supported(self, tmp_path):
        with pytest.raises(UnknownFormatError) as err:
            ingest_external(tmp_path, "mystery-layout")
        assert "perframe-json" in str(err.value)

    def test_missing_intrinsics_names_field(self, tmp_path):
        ext = tmp_path / "ext"
        self._make_external(ext, n=1, drop_intrinsics=True)
        with pytest.raises(SceneParseError) as err:
            ingest_external(ext, "perframe-json")
        assert "intrinsics" in str(err.value)

    def test_ingested_scene_round_trips(self, tmp_path):
        ext = tmp_path / "ext"
        self._make_external(ext, n=3)
        manifest = ingest_external(ext, "perframe-json")
        save_scene(manifest, tmp_path / "canon")
        loaded = load_scene(tmp_path / "canon")
        assert len(loaded.frames) == 3
