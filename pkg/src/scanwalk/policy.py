"""Next-best-move policy: action network, REINFORCE trainer, baselines, evaluator.

The action network is a single-hidden-layer softmax over the six moves,
fed the current view's image features, the normalized target box, and a
visibility bit. Training follows the likelihood-ratio gradient: sampled
episodes weight the gradient of their action log-probabilities by the
episode reward, which is the classifier's score when it names the target
correctly at the stopping step and zero otherwise.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import BoundingBox
from .environment import EpisodeConfig, EpisodeSession, Observation
from .movegraph import Action
from .recognition import (
    ClassifierModel,
    DivergenceError,
    FeatureExtractor,
    classify,
    extract_features,
    top1,
)
from .sceneio import SceneManifest

N_ACTIONS = 6
BOX_FEATURES = 5  # normalized xmin, ymin, xmax, ymax plus a visibility bit


class PolicyError(ValueError):
    pass


# -- parameters -----------------------------------------------------------------


@dataclass
class PolicyParams:
    """Weights of the action network: input -> tanh hidden -> 6 logits."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: Optional[np.ndarray]

    @property
    def input_dim(self) -> int:
        return int(self.w1.shape[0])

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            w1=self.w1.copy(),
            b1=self.b1.copy(),
            w2=self.w2.copy(),
            b2=None if self.b2 is None else self.b2.copy(),
        )

    def to_vector(self) -> np.ndarray:
        parts = [self.w1.ravel(), self.b1, self.w2.ravel()]
        if self.b2 is not None:
            parts.append(self.b2)
        return np.concatenate(parts)

    def from_vector(self, vec: np.ndarray) -> "PolicyParams":
        out = self.copy()
        i = 0
        for arr in (out.w1, out.b1, out.w2) + ((out.b2,) if out.b2 is not None else ()):
            arr[...] = vec[i : i + arr.size].reshape(arr.shape)
            i += arr.size
        return out


def init_policy(
    input_dim: int,
    hidden: int = 64,
    init_scale: float = 0.05,
    seed: int = 0,
    output_bias: bool = True,
) -> PolicyParams:
    rng = np.random.default_rng(seed)
    return PolicyParams(
        w1=rng.uniform(-init_scale, init_scale, size=(input_dim, hidden)),
        b1=np.zeros(hidden),
        w2=rng.uniform(-init_scale, init_scale, size=(hidden, N_ACTIONS)),
        b2=np.zeros(N_ACTIONS) if output_bias else None,
    )


def zero_policy(input_dim: int, hidden: int = 64) -> PolicyParams:
    """All-zero weights; the action distribution is exactly uniform."""
    return PolicyParams(
        w1=np.zeros((input_dim, hidden)),
        b1=np.zeros(hidden),
        w2=np.zeros((hidden, N_ACTIONS)),
        b2=np.zeros(N_ACTIONS),
    )


# -- forward pass ----------------------------------------------------------------


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def policy_forward(params: PolicyParams, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.input_dim,):
        raise PolicyError(
            f"observation feature dimension {x.shape} does not match policy ({params.input_dim})"
        )
    hidden = np.tanh(x @ params.w1 + params.b1)
    logits = hidden @ params.w2
    if params.b2 is not None:
        logits = logits + params.b2
    return _softmax(logits), hidden


def action_distribution(params: PolicyParams, x: np.ndarray) -> np.ndarray:
    """Probability over the six actions for one encoded observation."""
    return policy_forward(params, x)[0]


def encode_observation(
    obs: Observation, image_features: Optional[np.ndarray] = None,
    extractor: FeatureExtractor = extract_features,
) -> np.ndarray:
    """Policy input: full-image features, normalized box, visibility bit.

    An absent box encodes as four zeros with the bit cleared.
    """
    if image_features is None:
        image_features = extractor(obs.rgb)
    h, w = obs.rgb.shape[:2]
    if obs.box is None:
        tail = np.zeros(BOX_FEATURES)
    else:
        tail = np.array(
            [obs.box.xmin / w, obs.box.ymin / h, obs.box.xmax / w, obs.box.ymax / h, 1.0]
        )
    return np.concatenate([image_features, tail])


# -- policy objects ---------------------------------------------------------------


class LearnedPolicy:
    kind = "learned"

    def __init__(self, params: PolicyParams):
        self.params = params

    def distribution(self, x: np.ndarray) -> np.ndarray:
        return action_distribution(self.params, x)


class RandomPolicy:
    """Uniform over the six actions, regardless of the observation."""

    kind = "random"

    def distribution(self, x: np.ndarray) -> np.ndarray:
        return np.full(N_ACTIONS, 1.0 / N_ACTIONS)


class ForwardPolicy:
    """Always moves forward."""

    kind = "forward"

    def distribution(self, x: np.ndarray) -> np.ndarray:
        probs = np.zeros(N_ACTIONS)
        probs[int(Action.FORWARD)] = 1.0
        return probs


def baseline_policy(kind: str):
    if kind == "random":
        return RandomPolicy()
    if kind == "forward":
        return ForwardPolicy()
    raise PolicyError(f"unknown baseline policy {kind!r}; expected 'random' or 'forward'")


# -- scene caches ------------------------------------------------------------------


class SceneCache:
    """Per-scene memo of frame features and per-(frame, instance) classifier output.

    Both depend only on immutable scene content, so caching collapses the
    per-step cost of episodes to a few small matrix products.
    """

    def __init__(
        self,
        scene: SceneManifest,
        classifier: Optional[ClassifierModel],
        extractor: FeatureExtractor = extract_features,
    ):
        self.scene = scene
        self.classifier = classifier
        self.extractor = extractor
        self._frame_features: Dict[str, np.ndarray] = {}
        self._crop_probs: Dict[Tuple[str, str], Optional[np.ndarray]] = {}

    def frame_features(self, frame_id: str) -> np.ndarray:
        if frame_id not in self._frame_features:
            self._frame_features[frame_id] = self.extractor(self.scene.load_rgb(frame_id))
        return self._frame_features[frame_id]

    def crop_probs(self, frame_id: str, instance_id: str) -> Optional[np.ndarray]:
        key = (frame_id, instance_id)
        if key not in self._crop_probs:
            ann = self.scene.annotation_for(frame_id, instance_id)
            if ann is None or self.classifier is None:
                self._crop_probs[key] = None
            else:
                rgb = self.scene.load_rgb(frame_id)
                crop = rgb[ann.box.ymin : ann.box.ymax, ann.box.xmin : ann.box.xmax]
                self._crop_probs[key] = classify(self.classifier, crop, self.extractor)
        return self._crop_probs[key]

    def encode(self, obs: Observation) -> np.ndarray:
        return encode_observation(obs, image_features=self.frame_features(obs.frame_id))


class CachedSession(EpisodeSession):
    """EpisodeSession that reads classifier outputs through a SceneCache."""

    def __init__(self, cache: SceneCache, config: EpisodeConfig):
        super().__init__(cache.scene, config, classifier=cache.classifier)
        self.cache = cache

    def _classify(self, obs: Observation) -> None:
        self._last_top1 = None
        self._last_score = 0.0
        if self.classifier is None or obs.box is None:
            return
        probs = self.cache.crop_probs(obs.frame_id, self.state.instance_id)
        if probs is None:
            return
        from .environment import check_confidence_stop

        self._last_top1, self._last_score = top1(self.classifier, probs)
        self.state = check_confidence_stop(self.state, probs, self.config)


# -- rollouts -----------------------------------------------------------------------


@dataclass
class TrajectoryStep:
    features: np.ndarray
    action: int
    frame_id: str
    box: Optional[BoundingBox]
    top1: Optional[str]
    score: float


@dataclass
class Trajectory:
    instance_id: str
    start_frame: str
    steps: List[TrajectoryStep]
    final_frame: str
    final_top1: Optional[str]
    final_score: float
    reward: float
    reason: Optional[str]

    def to_records(self) -> List[dict]:
        """Episode trace lines: {t, frame_id, action, box, classifier_top1, score}."""
        records = []
        for t, step in enumerate(self.steps):
            records.append(
                {
                    "t": t,
                    "frame_id": step.frame_id,
                    "action": Action(step.action).name.lower(),
                    "box": None
                    if step.box is None
                    else [step.box.xmin, step.box.ymin, step.box.xmax, step.box.ymax],
                    "classifier_top1": step.top1,
                    "score": step.score,
                }
            )
        records.append(
            {
                "t": len(self.steps),
                "frame_id": self.final_frame,
                "action": None,
                "box": None,
                "classifier_top1": self.final_top1,
                "score": self.final_score,
            }
        )
        return records


def rollout(
    policy,
    cache: SceneCache,
    instance_id: str,
    config: EpisodeConfig,
    rng: np.random.Generator,
    start_frame: Optional[str] = None,
) -> Trajectory:
    """Run one episode, sampling actions from the policy at every step."""
    session = CachedSession(cache, config)
    seed = int(rng.integers(0, 2**31)) if start_frame is None else None
    obs, info = session.reset(instance_id, start_frame=start_frame, seed=seed)
    steps: List[TrajectoryStep] = []
    done = info["done"]
    reward = info["reward"]
    while not done:
        x = cache.encode(obs)
        probs = policy.distribution(x)
        action = int(rng.choice(N_ACTIONS, p=probs))
        steps.append(
            TrajectoryStep(
                features=x,
                action=action,
                frame_id=obs.frame_id,
                box=obs.box,
                top1=info.get("top1"),
                score=info.get("score", 0.0),
            )
        )
        obs, reward, done, info = session.step(Action(action))
    state = session.state
    return Trajectory(
        instance_id=instance_id,
        start_frame=steps[0].frame_id if steps else obs.frame_id,
        steps=steps,
        final_frame=obs.frame_id,
        final_top1=info.get("top1"),
        final_score=info.get("score", 0.0),
        reward=float(reward),
        reason=state.reason,
    )


# -- REINFORCE update -----------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    episodes_per_batch: int = 32
    total_episodes: int = 3200
    learning_rate: float = 0.01
    max_steps: int = 5
    confidence_threshold: float = 0.9
    blocked_action: str = "stay"
    subtract_mean_reward: bool = False
    hidden: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.episodes_per_batch < 1:
            raise PolicyError("episodes_per_batch must be at least 1")

    def episode_config(self) -> EpisodeConfig:
        return EpisodeConfig(
            max_steps=self.max_steps,
            confidence_threshold=self.confidence_threshold,
            blocked_action=self.blocked_action,
        )


@dataclass
class TrainStats:
    mean_reward: float
    accuracy: float
    grad_norm: float
    episode_lengths: Dict[int, int] = field(default_factory=dict)


def surrogate_value(params: PolicyParams, trajectories: Sequence[Trajectory],
                    rewards: Sequence[float]) -> float:
    """(1/M) sum_i sum_t log p(a_t | x_t) * R_i for frozen trajectories."""
    total = 0.0
    for traj, r in zip(trajectories, rewards):
        if r == 0.0:
            continue
        for step in traj.steps:
            probs, _ = policy_forward(params, step.features)
            total += math.log(max(probs[step.action], 1e-300)) * r
    return total / len(trajectories)


def surrogate_gradient(
    params: PolicyParams, trajectories: Sequence[Trajectory], rewards: Sequence[float]
) -> PolicyParams:
    """Analytic gradient of surrogate_value with respect to every weight."""
    g = PolicyParams(
        w1=np.zeros_like(params.w1),
        b1=np.zeros_like(params.b1),
        w2=np.zeros_like(params.w2),
        b2=None if params.b2 is None else np.zeros_like(params.b2),
    )
    m = len(trajectories)
    for traj, r in zip(trajectories, rewards):
        if r == 0.0:
            continue
        for step in traj.steps:
            probs, hidden = policy_forward(params, step.features)
            dlogits = -probs * r
            dlogits[step.action] += r
            g.w2 += np.outer(hidden, dlogits)
            if g.b2 is not None:
                g.b2 += dlogits
            dhidden = params.w2 @ dlogits
            dpre = (1.0 - hidden * hidden) * dhidden
            g.w1 += np.outer(step.features, dpre)
            g.b1 += dpre
    g.w1 /= m
    g.b1 /= m
    g.w2 /= m
    if g.b2 is not None:
        g.b2 /= m
    return g


def reinforce_update(
    params: PolicyParams, trajectories: Sequence[Trajectory], config: TrainConfig
) -> Tuple[PolicyParams, TrainStats]:
    """One gradient-ascent step on the sampled surrogate.

    With every (baseline-adjusted) reward at zero the parameters come back
    unchanged. Non-finite gradients raise DivergenceError.
    """
    if len(trajectories) == 0:
        raise PolicyError("need at least one trajectory")
    rewards = np.array([t.reward for t in trajectories], dtype=np.float64)
    adjusted = rewards - rewards.mean() if config.subtract_mean_reward else rewards

    grads = surrogate_gradient(params, trajectories, adjusted)
    flat = grads.to_vector()
    if not np.all(np.isfinite(flat)):
        raise DivergenceError("non-finite policy gradient")
    grad_norm = float(np.linalg.norm(flat))

    new_params = params.copy()
    new_params.w1 += config.learning_rate * grads.w1
    new_params.b1 += config.learning_rate * grads.b1
    new_params.w2 += config.learning_rate * grads.w2
    if new_params.b2 is not None and grads.b2 is not None:
        new_params.b2 += config.learning_rate * grads.b2

    lengths: Dict[int, int] = {}
    for t in trajectories:
        lengths[len(t.steps)] = lengths.get(len(t.steps), 0) + 1
    stats = TrainStats(
        mean_reward=float(rewards.mean()),
        accuracy=float((rewards > 0).mean()),
        grad_norm=grad_norm,
        episode_lengths=lengths,
    )
    return new_params, stats


def train_policy(
    caches: Sequence[SceneCache], config: TrainConfig = TrainConfig()
) -> Tuple[PolicyParams, List[TrainStats]]:
    """REINFORCE over episodes sampled uniformly from scene/instance/start triples."""
    starts = []
    for cache in caches:
        for iid in sorted(cache.scene.instances):
            for fid in cache.scene.frames_with_instance(iid):
                starts.append((cache, iid, fid))
    if not starts:
        raise PolicyError("no annotated (instance, frame) starts in the given scenes")

    sample_dim = caches[0].frame_features(starts[0][2]).shape[0] + BOX_FEATURES
    params = init_policy(sample_dim, hidden=config.hidden, seed=config.seed)
    rng = np.random.default_rng(config.seed)
    episode_config = config.episode_config()

    history: List[TrainStats] = []
    n_batches = max(1, config.total_episodes // config.episodes_per_batch)
    for _ in range(n_batches):
        batch = []
        for _ in range(config.episodes_per_batch):
            cache, iid, fid = starts[int(rng.integers(len(starts)))]
            batch.append(rollout(LearnedPolicy(params), cache, iid, episode_config, rng, fid))
        params, stats = reinforce_update(params, batch, config)
        history.append(stats)
    return params, history


# -- evaluation --------------------------------------------------------------------


@dataclass
class EvalResult:
    budgets: List[int]
    overall: Dict[int, float]
    per_instance: Dict[str, Dict[int, float]]
    episodes_per_budget: int


def evaluate_policy(
    policy,
    caches: Sequence[SceneCache],
    budgets: Sequence[int],
    confidence_threshold: float = 0.9,
    blocked_action: str = "stay",
    seed: int = 0,
    max_starts_per_instance: Optional[int] = None,
) -> EvalResult:
    """Accuracy of the classifier after letting the policy spend each move budget.

    Every annotated (instance, frame) pair is an episode start (optionally
    a seeded subsample per instance). Budget 0 classifies the start view
    untouched, so it cannot depend on the policy.
    """
    if any(b < 0 for b in budgets):
        raise PolicyError("move budgets must be non-negative")
    starts: List[Tuple[SceneCache, str, str]] = []
    pick_rng = np.random.default_rng(seed)
    for cache in caches:
        for iid in sorted(cache.scene.instances):
            frames = cache.scene.frames_with_instance(iid)
            if max_starts_per_instance is not None and len(frames) > max_starts_per_instance:
                idx = pick_rng.choice(len(frames), size=max_starts_per_instance, replace=False)
                frames = [frames[i] for i in sorted(idx)]
            starts.extend((cache, iid, fid) for fid in frames)

    counts: Dict[str, int] = {}
    for _, iid, _ in starts:
        counts[iid] = counts.get(iid, 0) + 1

    overall: Dict[int, float] = {}
    per_instance: Dict[str, Dict[int, float]] = {}
    for budget in budgets:
        correct_total = 0
        correct_by_instance: Dict[str, int] = {iid: 0 for iid in counts}
        for s_idx, (cache, iid, fid) in enumerate(starts):
            rng = np.random.default_rng([seed, budget, s_idx])
            if budget == 0:
                session = CachedSession(
                    cache,
                    EpisodeConfig(
                        max_steps=1,
                        confidence_threshold=confidence_threshold,
                        blocked_action=blocked_action,
                    ),
                )
                _obs, info = session.reset(iid, start_frame=fid)
                hit = info["top1"] == iid
            else:
                config = EpisodeConfig(
                    max_steps=budget,
                    confidence_threshold=confidence_threshold,
                    blocked_action=blocked_action,
                )
                traj = rollout(policy, cache, iid, config, rng, start_frame=fid)
                hit = traj.final_top1 == iid
            correct_total += int(hit)
            correct_by_instance[iid] += int(hit)
        overall[budget] = correct_total / len(starts)
        for iid, c in correct_by_instance.items():
            per_instance.setdefault(iid, {})[budget] = c / counts[iid]
    return EvalResult(
        budgets=list(budgets),
        overall=overall,
        per_instance=per_instance,
        episodes_per_budget=len(starts),
    )


# -- checkpointing ---------------------------------------------------------------------


def _enc(arr: Optional[np.ndarray]):
    if arr is None:
        return None
    a = np.ascontiguousarray(arr, dtype=np.float64)
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _dec(obj) -> Optional[np.ndarray]:
    if obj is None:
        return None
    return (
        np.frombuffer(base64.b64decode(obj["data"]), dtype=np.float64).reshape(obj["shape"]).copy()
    )


def save_policy(params: PolicyParams, path) -> None:
    payload = {
        "format": "scanwalk-policy",
        "version": 1,
        "w1": _enc(params.w1),
        "b1": _enc(params.b1),
        "w2": _enc(params.w2),
        "b2": _enc(params.b2),
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True))


def load_policy(path) -> PolicyParams:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != "scanwalk-policy":
        raise PolicyError(f"{path}: not a policy checkpoint")
    return PolicyParams(
        w1=_dec(payload["w1"]),
        b1=_dec(payload["b1"]),
        w2=_dec(payload["w2"]),
        b2=_dec(payload["b2"]),
    )
