"""Episodic agent-environment interface over a labeled scene.

An episode starts at a frame where the target instance is annotated. Each
step the agent picks one of the six actions; the movement graph decides
which frame comes next. Episodes end at the step cap, when a classifier
reports enough confidence, or (optionally) when a move is blocked.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from .core import BoundingBox
from .movegraph import Action
from .sceneio import SceneManifest

REASON_MAX_STEPS = "max-steps"
REASON_CONFIDENCE = "confidence"
REASON_BLOCKED = "blocked"


class EpisodeError(RuntimeError):
    pass


class NoValidStartError(EpisodeError):
    """The target instance is never annotated in the scene."""


@dataclass(frozen=True)
class EpisodeConfig:
    max_steps: int = 5
    confidence_threshold: float = 0.9
    blocked_action: str = "stay"  # "stay" or "terminate"

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if not (0 < self.confidence_threshold <= 1):
            raise ValueError("confidence_threshold must lie in (0, 1]")
        if self.blocked_action not in ("stay", "terminate"):
            raise ValueError(f"unknown blocked_action {self.blocked_action!r}")


@dataclass(frozen=True)
class EpisodeState:
    frame_id: str
    instance_id: str
    t: int
    terminated: bool = False
    reason: Optional[str] = None
    box: Optional[BoundingBox] = None


@dataclass(frozen=True)
class Observation:
    frame_id: str
    rgb: np.ndarray
    box: Optional[BoundingBox]


def _observe(scene: SceneManifest, frame_id: str, instance_id: str) -> Observation:
    ann = scene.annotation_for(frame_id, instance_id)
    return Observation(
        frame_id=frame_id,
        rgb=scene.load_rgb(frame_id),
        box=ann.box if ann is not None else None,
    )


def reset(
    scene: SceneManifest,
    instance_id: str,
    start_frame: Optional[str] = None,
    seed: Optional[int] = None,
    config: EpisodeConfig = EpisodeConfig(),
) -> Tuple[EpisodeState, Observation]:
    """Begin an episode at an explicit start frame or a seeded uniform sample.

    Start frames are drawn from the frames where the instance is
    annotated; an instance with no annotations has no valid start.
    """
    starts = scene.frames_with_instance(instance_id)
    if not starts:
        raise NoValidStartError(f"instance {instance_id!r} is never visible in this scene")
    if start_frame is None:
        rng = np.random.default_rng(seed)
        start_frame = starts[int(rng.integers(len(starts)))]
    elif scene.annotation_for(start_frame, instance_id) is None:
        raise EpisodeError(
            f"instance {instance_id!r} is not annotated in start frame {start_frame!r}"
        )
    obs = _observe(scene, start_frame, instance_id)
    state = EpisodeState(frame_id=start_frame, instance_id=instance_id, t=0, box=obs.box)
    return state, obs


def step(
    state: EpisodeState,
    action: Action,
    scene: SceneManifest,
    config: EpisodeConfig = EpisodeConfig(),
) -> Tuple[EpisodeState, Observation]:
    """Apply one action. Blocked moves either stay in place or end the episode."""
    if state.terminated:
        raise EpisodeError("step() called on a terminated episode")
    if scene.movegraph is None:
        raise EpisodeError("scene has no movement graph; build one first")
    successor = scene.movegraph.successor(state.frame_id, Action(action))
    frame_id = state.frame_id
    terminated = False
    reason = None
    if successor is not None:
        frame_id = successor
    elif config.blocked_action == "terminate":
        terminated = True
        reason = REASON_BLOCKED

    t = state.t + 1
    if not terminated and t >= config.max_steps:
        terminated = True
        reason = REASON_MAX_STEPS

    obs = _observe(scene, frame_id, state.instance_id)
    new_state = EpisodeState(
        frame_id=frame_id,
        instance_id=state.instance_id,
        t=t,
        terminated=terminated,
        reason=reason,
        box=obs.box,
    )
    return new_state, obs


def check_confidence_stop(
    state: EpisodeState, distribution: np.ndarray, config: EpisodeConfig = EpisodeConfig()
) -> EpisodeState:
    """Terminate the episode when the classifier clears the confidence bar.

    The stop is strict: a top probability exactly at the threshold does
    not stop the episode.
    """
    probs = np.asarray(distribution, dtype=np.float64)
    total = float(probs.sum())
    if abs(total - 1.0) > 1e-6:
        raise EpisodeError(f"classifier output sums to {total}, not a distribution")
    if state.terminated:
        return state
    if float(probs.max()) > config.confidence_threshold:
        return replace(state, terminated=True, reason=REASON_CONFIDENCE)
    return state


class EpisodeSession:
    """Stateful reset/step wrapper in the conventional agent-environment shape.

    step() returns (observation, reward, done, info). The reward is the
    classifier's score at the terminal step when its top-1 equals the
    target, zero otherwise, and zero at every non-terminal step. Without a
    classifier there are no confidence stops and rewards are always zero.
    """

    def __init__(self, scene: SceneManifest, config: EpisodeConfig = EpisodeConfig(), classifier=None):
        self.scene = scene
        self.config = config
        self.classifier = classifier
        self.state: Optional[EpisodeState] = None
        self._last_top1: Optional[str] = None
        self._last_score: float = 0.0

    def _classify(self, obs: Observation) -> None:
        self._last_top1 = None
        self._last_score = 0.0
        if self.classifier is None or obs.box is None:
            return
        from .recognition import classify, top1

        crop = obs.rgb[obs.box.ymin : obs.box.ymax, obs.box.xmin : obs.box.xmax]
        probs = classify(self.classifier, crop)
        self._last_top1, self._last_score = top1(self.classifier, probs)
        assert self.state is not None
        self.state = check_confidence_stop(self.state, probs, self.config)

    def _terminal_reward(self) -> float:
        assert self.state is not None
        if self.state.terminated and self._last_top1 == self.state.instance_id:
            return float(self._last_score)
        return 0.0

    def reset(
        self, instance_id: str, start_frame: Optional[str] = None, seed: Optional[int] = None
    ) -> Tuple[Observation, dict]:
        self.state, obs = reset(self.scene, instance_id, start_frame, seed, self.config)
        self._classify(obs)
        info = {
            "t": 0,
            "done": self.state.terminated,
            "reason": self.state.reason,
            "top1": self._last_top1,
            "score": self._last_score,
            "reward": self._terminal_reward(),
        }
        return obs, info

    def step(self, action: Action) -> Tuple[Observation, float, bool, dict]:
        if self.state is None:
            raise EpisodeError("reset() must be called before step()")
        self.state, obs = step(self.state, action, self.scene, self.config)
        self._classify(obs)
        reward = self._terminal_reward()
        info = {
            "t": self.state.t,
            "reason": self.state.reason,
            "top1": self._last_top1,
            "score": self._last_score,
        }
        return obs, reward, self.state.terminated, info
