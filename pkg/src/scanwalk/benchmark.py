"""Built-in viewpoint-sensitive benchmark for next-best-move training.

The scene puts a row of identically shaped, identically colored boxes
along the far wall; each box carries a unique marker color on its left
face only. Views from an object's right or front are mutually
indistinguishable, so a classifier is confident only once the camera has
moved far enough left to see the marker. Policies that learn to strafe
toward the informative side beat both the random and forward baselines.

The camera uses a wide field of view so a few sideways steps keep the
target in frame, and the classifier is trained long enough that marker
views clear the confidence-stop threshold.
"""

from __future__ import annotations

from typing import List, Tuple

from .core import Intrinsics
from .labeling import label_scene
from .movegraph import build_move_graph
from .policy import TrainConfig
from .recognition import (
    AugmentationSpec,
    ClassifierModel,
    TrainParams,
    make_training_set,
    train_classifier,
)
from .sceneio import SceneManifest
from .synth import (
    Box3D,
    GroundTruth,
    SynthObject,
    SynthSceneSpec,
    generate_scene,
    make_backgrounds,
    render_object_views,
)

BENCHMARK_INTRINSICS = Intrinsics(fx=210.0, fy=210.0, cx=160.0, cy=120.0, width=320, height=240)

MARKER_COLORS = [
    (230, 40, 40),
    (40, 90, 230),
    (40, 200, 60),
    (235, 220, 50),
    (230, 120, 30),
    (160, 50, 210),
    (40, 210, 210),
    (240, 100, 180),
]

BODY_COLOR = (150, 150, 150)


def benchmark_scene_spec(seed: int = 0, n_objects: int = 6) -> SynthSceneSpec:
    """Scene of twin objects identifiable only from their left side."""
    if not (2 <= n_objects <= len(MARKER_COLORS)):
        raise ValueError(f"n_objects must lie in [2, {len(MARKER_COLORS)}]")
    first_x, spacing_x = 0.9, 0.55
    objects: List[SynthObject] = []
    for i in range(n_objects):
        objects.append(
            SynthObject(
                instance_id=f"item{i}",
                box=Box3D((first_x + spacing_x * i, 2.95, 1.2), (0.26, 0.34, 0.5)),
                color=BODY_COLOR,
                face_colors={"-x": MARKER_COLORS[i]},
            )
        )
    room_x = first_x + spacing_x * (n_objects - 1) + 0.95
    return SynthSceneSpec(
        scene_id=f"viewpoint-benchmark-{seed}",
        room_size=(room_x, 3.6, 2.5),
        objects=objects,
        grid_extent=(1.6, room_x - 0.6, 0.6, 1.5),
        grid_spacing=0.30,
        intrinsics=BENCHMARK_INTRINSICS,
        surface_pitch=0.004,
        cloud_points_per_instance=1500,
        seed=seed,
    )


def build_benchmark_scene(spec: SynthSceneSpec) -> Tuple[SceneManifest, GroundTruth]:
    """Render the benchmark scene and attach movement pointers and labels."""
    manifest, gt = generate_scene(spec)
    manifest.movegraph = build_move_graph(manifest.poses())
    fused = {fid: manifest.load_depth(fid) for fid in manifest.frame_ids()}
    annotations, _stats = label_scene(manifest, fused_depths=fused)
    manifest.set_annotations(annotations)
    return manifest, gt


def train_benchmark_classifier(spec: SynthSceneSpec, seed: int = 1) -> ClassifierModel:
    """Instance classifier tuned so marker views clear the 0.9 stop threshold.

    Training crops keep the object reasonably large (the tiny-scale tail of
    the augmentation range would wash the marker out of the histogram) and
    the logistic head trains long enough to saturate on the separable
    marker views.
    """
    views = {
        o.instance_id: render_object_views(
            o, intrinsics=spec.intrinsics, yaw_steps=12, distances=(0.5, 0.75)
        )
        for o in spec.objects
    }
    aug = AugmentationSpec(
        scale_range=(0.25, 1.0),
        crop_jitter=0.05,
        color_jitter=0.03,
        backgrounds=make_backgrounds(20, seed=seed + 100),
        seed=seed + 6,
    )
    features, labels = make_training_set(views, aug, samples_per_instance=250)
    return train_classifier(
        features, labels, TrainParams(learning_rate=0.2, epochs=500, hidden_units=0, seed=seed)
    )


def benchmark_train_config(seed: int) -> TrainConfig:
    """REINFORCE settings that reach the strafing strategy within seconds."""
    return TrainConfig(
        episodes_per_batch=32,
        total_episodes=4096,
        learning_rate=0.3,
        max_steps=5,
        confidence_threshold=0.9,
        subtract_mean_reward=True,
        seed=seed,
    )
