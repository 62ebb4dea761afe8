import numpy as np
import pytest

from scanwalk.core import BoundingBox, InstanceAnnotation, Intrinsics, ScenePose
from scanwalk.core import quat_from_yaw_pitch
from scanwalk.environment import (
    EpisodeConfig,
    EpisodeError,
    NoValidStartError,
    REASON_BLOCKED,
    REASON_CONFIDENCE,
    REASON_MAX_STEPS,
    check_confidence_stop,
    reset,
    step,
)
from scanwalk.movegraph import Action, MoveGraph
from scanwalk.sceneio import FrameRecord, InstanceRecord, SceneManifest

INTR = Intrinsics(fx=30.0, fy=30.0, cx=8.0, cy=6.0, width=16, height=12)


def tiny_scene() -> SceneManifest:
    """Hand-built 3-frame corridor: f0 -f> f1 -f> f2, rotations at f0."""
    manifest = SceneManifest(scene_id="tiny", scan_id="1")
    rng = np.random.default_rng(0)
    for i, (x, yaw) in enumerate([(0.0, 0.0), (0.3, 0.0), (0.6, 0.0), (0.0, 30.0)]):
        pose = ScenePose(f"f{i}", np.array([x, 0.0, 1.0]), quat_from_yaw_pitch(yaw), INTR)
        rgb = rng.integers(0, 255, size=(12, 16, 3), dtype=np.uint8)
        depth = np.full((12, 16), 1500, dtype=np.uint16)
        manifest.add_frame(FrameRecord(pose=pose, rgb=rgb, depth=depth))
    manifest.add_instance(InstanceRecord(instance_id="cup", name="cup"))
    manifest.add_instance(InstanceRecord(instance_id="bottle", name="bottle"))
    graph = MoveGraph()
    graph.add("f0", Action.FORWARD, "f1")
    graph.add("f1", Action.FORWARD, "f2")
    graph.add("f1", Action.BACKWARD, "f0")
    graph.add("f2", Action.BACKWARD, "f1")
    graph.add("f0", Action.ROTATE_CCW, "f3")
    graph.add("f3", Action.ROTATE_CW, "f0")
    manifest.movegraph = graph
    manifest.set_annotations(
        [
            InstanceAnnotation("f0", "cup", BoundingBox(2, 2, 8, 8, "cup"), 40),
            InstanceAnnotation("f1", "cup", BoundingBox(3, 2, 10, 9, "cup"), 55),
            # cup invisible in f2 and f3; bottle never annotated
        ]
    )
    return manifest


class TestReset:
    def test_explicit_start(self):
        scene = tiny_scene()
        state, obs = reset(scene, "cup", start_frame="f0")
        assert state.frame_id == "f0" and state.t == 0 and not state.terminated
        assert obs.box is not None and obs.box.xmin == 2

    def test_start_without_annotation_rejected(self):
        with pytest.raises(EpisodeError):
            reset(tiny_scene(), "cup", start_frame="f2")

    def test_no_valid_start(self):
        with pytest.raises(NoValidStartError):
            reset(tiny_scene(), "bottle")

    def test_seeded_sampling_deterministic(self):
        scene = tiny_scene()
        a, _ = reset(scene, "cup", seed=7)
        b, _ = reset(scene, "cup", seed=7)
        assert a.frame_id == b.frame_id


class TestStep:
    def test_pointer_lookup(self):
        scene = tiny_scene()
        state, _ = reset(scene, "cup", start_frame="f0")
        state, obs = step(state, Action.FORWARD, scene)
        assert state.frame_id == "f1" and state.t == 1
        assert obs.box is not None  # cup annotated in f1

    def test_blocked_stay_increments_t(self):
        scene = tiny_scene()
        state, _ = reset(scene, "cup", start_frame="f0")
        state, obs = step(state, Action.LEFT, scene)  # no pointer
        assert state.frame_id == "f0" and state.t == 1 and not state.terminated

    def test_blocked_terminate_policy(self):
        scene = tiny_scene()
        config = EpisodeConfig(blocked_action="terminate")
        state, _ = reset(scene, "cup", start_frame="f0", config=config)
        state, _ = step(state, Action.LEFT, scene, config)
        assert state.terminated and state.reason == REASON_BLOCKED

    def test_max_steps_termination(self):
        scene = tiny_scene()
        config = EpisodeConfig(max_steps=5)
        state, _ = reset(scene, "cup", start_frame="f0", config=config)
        for i in range(5):
            assert not state.terminated
            state, _ = step(state, Action.ROTATE_CW, scene, config)  # blocked; stays
        assert state.t == 5
        assert state.terminated and state.reason == REASON_MAX_STEPS

    def test_step_after_termination_raises(self):
        scene = tiny_scene()
        config = EpisodeConfig(max_steps=1)
        state, _ = reset(scene, "cup", start_frame="f0", config=config)
        state, _ = step(state, Action.FORWARD, scene, config)
        assert state.terminated
        with pytest.raises(EpisodeError):
            step(state, Action.FORWARD, scene, config)

    def test_box_absent_when_target_leaves_view(self):
        scene = tiny_scene()
        config = EpisodeConfig(max_steps=5)
        state, _ = reset(scene, "cup", start_frame="f1", config=config)
        state, obs = step(state, Action.FORWARD, scene, config)  # f2: no annotation
        assert obs.box is None and state.box is None
        assert not state.terminated

    def test_trajectory_fully_determined_by_actions(self):
        scene = tiny_scene()
        actions = [Action.FORWARD, Action.LEFT, Action.FORWARD, Action.BACKWARD]
        config = EpisodeConfig(max_steps=10)
        visited = []
        for _ in range(2):
            state, _ = reset(scene, "cup", start_frame="f0", config=config)
            frames = [state.frame_id]
            for a in actions:
                state, _ = step(state, a, scene, config)
                frames.append(state.frame_id)
            visited.append(frames)
        assert visited[0] == visited[1] == ["f0", "f1", "f1", "f2", "f1"]

    def test_every_visited_frame_exists(self):
        scene = tiny_scene()
        rng = np.random.default_rng(3)
        config = EpisodeConfig(max_steps=8)
        state, _ = reset(scene, "cup", start_frame="f0", config=config)
        while not state.terminated:
            state, _ = step(state, Action(int(rng.integers(6))), scene, config)
            assert state.frame_id in scene.frames
        assert state.t <= 8


class TestConfidenceStop:
    def scene_state(self):
        scene = tiny_scene()
        state, _ = reset(scene, "cup", start_frame="f0")
        return state

    def test_stop_above_threshold(self):
        probs = np.array([0.95, 0.05])
        state = check_confidence_stop(self.scene_state(), probs)
        assert state.terminated and state.reason == REASON_CONFIDENCE

    def test_exact_threshold_does_not_stop(self):
        probs = np.array([0.9, 0.1])
        state = check_confidence_stop(self.scene_state(), probs)
        assert not state.terminated

    def test_uniform_over_many_classes_does_not_stop(self):
        probs = np.full(33, 1 / 33)
        state = check_confidence_stop(self.scene_state(), probs)
        assert not state.terminated

    def test_unnormalized_distribution_rejected(self):
        with pytest.raises(EpisodeError):
            check_confidence_stop(self.scene_state(), np.array([0.7, 0.7]))


class TestConfigGuards:
    def test_bad_max_steps(self):
        with pytest.raises(ValueError):
            EpisodeConfig(max_steps=0)

    def test_bad_threshold(self):
        with pytest.raises(ValueError):
            EpisodeConfig(confidence_threshold=1.5)

    def test_bad_blocked_policy(self):
        with pytest.raises(ValueError):
            EpisodeConfig(blocked_action="bounce")
