import numpy as np
import pytest

from scanwalk.core import Intrinsics
from scanwalk.labeling import label_scene
from scanwalk.movegraph import build_move_graph
from scanwalk.synth import Box3D, SynthObject, SynthOccluder, SynthSceneSpec, generate_scene

TEST_INTRINSICS = Intrinsics(fx=300.0, fy=300.0, cx=160.0, cy=120.0, width=320, height=240)


def quad_scene_spec(seed: int = 11) -> SynthSceneSpec:
    """2x2 grid, 12 yaws, three objects and one occluding wall segment."""
    return SynthSceneSpec(
        scene_id="quad",
        room_size=(3.2, 3.2, 2.4),
        objects=[
            SynthObject("red_box", Box3D((0.9, 2.5, 1.2), (0.35, 0.18, 0.55)), (200, 50, 40)),
            SynthObject("green_box", Box3D((2.3, 2.6, 1.2), (0.4, 0.2, 0.5)), (50, 190, 60)),
            SynthObject("blue_box", Box3D((2.7, 1.0, 1.2), (0.18, 0.3, 0.55)), (40, 70, 210)),
        ],
        occluders=[
            SynthOccluder(Box3D((1.6, 2.2, 1.2), (0.5, 0.08, 2.4)), (130, 125, 120)),
        ],
        grid_extent=(1.2, 1.5, 1.0, 1.3),
        grid_spacing=0.30,
        surface_pitch=0.0025,
        cloud_points_per_instance=2500,
        seed=seed,
    )


@pytest.fixture(scope="session")
def quad_scene():
    """Rendered 48-frame scene with ground truth; shared read-only."""
    manifest, gt = generate_scene(quad_scene_spec())
    manifest.movegraph = build_move_graph(manifest.poses())
    return manifest, gt


@pytest.fixture(scope="session")
def labeled_quad_scene(quad_scene):
    """The quad scene with fused-depth-free labels (clean depth) attached."""
    manifest, gt = quad_scene
    fused = {fid: gt.true_depth[fid] for fid in manifest.frame_ids()}
    annotations, _stats = label_scene(manifest, fused_depths=fused)
    manifest.set_annotations(annotations)
    return manifest, gt


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


@pytest.fixture(scope="session")
def quad_classifier():
    """Instance classifier for the quad scene's three objects."""
    from scanwalk.recognition import (
        AugmentationSpec,
        TrainParams,
        make_training_set,
        train_classifier,
    )
    from scanwalk.synth import make_backgrounds, render_object_views

    spec = quad_scene_spec()
    views = {
        o.instance_id: render_object_views(o, yaw_steps=8, distances=(0.6, 0.9))
        for o in spec.objects
    }
    aug = AugmentationSpec(
        scale_range=(0.1, 1.0),
        color_jitter=0.05,
        backgrounds=make_backgrounds(10, seed=1),
        seed=2,
    )
    features, labels = make_training_set(views, aug, samples_per_instance=40)
    return train_classifier(features, labels, TrainParams(seed=3))
