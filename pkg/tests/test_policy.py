import numpy as np
import pytest

from scanwalk.environment import EpisodeConfig
from scanwalk.movegraph import Action
from scanwalk.policy import (
    LearnedPolicy,
    PolicyError,
    PolicyParams,
    SceneCache,
    TrainConfig,
    Trajectory,
    TrajectoryStep,
    action_distribution,
    baseline_policy,
    evaluate_policy,
    init_policy,
    load_policy,
    reinforce_update,
    rollout,
    save_policy,
    surrogate_gradient,
    surrogate_value,
    zero_policy,
)


def make_traj(steps, reward, instance="obj"):
    return Trajectory(
        instance_id=instance,
        start_frame="f0",
        steps=[
            TrajectoryStep(
                features=np.asarray(x, dtype=np.float64),
                action=int(a),
                frame_id=f"f{i}",
                box=None,
                top1=None,
                score=0.0,
            )
            for i, (x, a) in enumerate(steps)
        ],
        final_frame="fz",
        final_top1=None,
        final_score=0.0,
        reward=reward,
        reason=None,
    )


class TestActionDistribution:
    def test_zero_params_uniform(self):
        params = zero_policy(input_dim=4, hidden=8)
        probs = action_distribution(params, np.array([0.3, -1.0, 2.0, 0.1]))
        np.testing.assert_allclose(probs, np.full(6, 1 / 6), atol=1e-12)

    def test_sums_to_one_and_deterministic(self):
        rng = np.random.default_rng(0)
        params = init_policy(5, hidden=7, seed=1)
        for _ in range(20):
            x = rng.normal(size=5)
            p1 = action_distribution(params, x)
            p2 = action_distribution(params, x)
            assert abs(p1.sum() - 1.0) < 1e-9
            np.testing.assert_array_equal(p1, p2)

    def test_logit_translation_invariance(self):
        params = init_policy(3, hidden=4, seed=2)
        x = np.array([0.5, -0.2, 1.0])
        base = action_distribution(params, x)
        shifted = params.copy()
        shifted.b2 = shifted.b2 + 7.3
        np.testing.assert_allclose(action_distribution(shifted, x), base, atol=1e-9)

    def test_dimension_mismatch(self):
        params = init_policy(3, hidden=4, seed=0)
        with pytest.raises(PolicyError):
            action_distribution(params, np.zeros(5))


class TestBaselinePolicies:
    def test_forward_is_deterministic(self):
        policy = baseline_policy("forward")
        probs = policy.distribution(np.zeros(10))
        assert probs[int(Action.FORWARD)] == 1.0
        assert probs.sum() == 1.0

    def test_random_frequencies(self):
        policy = baseline_policy("random")
        rng = np.random.default_rng(123)
        counts = np.zeros(6)
        for _ in range(6000):
            a = rng.choice(6, p=policy.distribution(np.zeros(3)))
            counts[a] += 1
        freqs = counts / 6000
        assert np.all(np.abs(freqs - 1 / 6) <= 0.02)

    def test_policies_ignore_observation(self):
        rng = np.random.default_rng(1)
        for kind in ("random", "forward"):
            policy = baseline_policy(kind)
            a = policy.distribution(rng.normal(size=4))
            b = policy.distribution(rng.normal(size=9))
            np.testing.assert_array_equal(a, b)

    def test_unknown_kind(self):
        with pytest.raises(PolicyError):
            baseline_policy("clever")


class TestReinforceUpdate:
    def test_zero_rewards_leave_params_unchanged(self):
        params = init_policy(4, hidden=3, seed=5)
        trajs = [
            make_traj([(np.ones(4), 2), (np.zeros(4), 1)], reward=0.0),
            make_traj([(np.full(4, -1.0), 0)], reward=0.0),
        ]
        new_params, stats = reinforce_update(params, trajs, TrainConfig())
        np.testing.assert_array_equal(new_params.to_vector(), params.to_vector())
        assert stats.mean_reward == 0.0 and stats.grad_norm == 0.0

    def test_nonzero_reward_changes_params(self):
        params = init_policy(4, hidden=3, seed=5)
        trajs = [make_traj([(np.ones(4), 2)], reward=0.7)]
        new_params, stats = reinforce_update(params, trajs, TrainConfig())
        assert stats.grad_norm > 0
        assert not np.array_equal(new_params.to_vector(), params.to_vector())

    def test_gradient_matches_finite_differences_on_10_param_policy(self):
        # input 3, hidden 1, no output bias: 3 + 1 + 6 = 10 parameters
        rng = np.random.default_rng(8)
        params = init_policy(3, hidden=1, seed=8, output_bias=False)
        assert params.to_vector().size == 10
        trajs = [
            make_traj([(rng.normal(size=3), int(rng.integers(6))) for _ in range(3)],
                      reward=float(rng.uniform(0.2, 1.0)))
            for _ in range(4)
        ]
        rewards = [t.reward for t in trajs]
        grad = surrogate_gradient(params, trajs, rewards).to_vector()
        vec = params.to_vector()
        eps = 1e-6
        for k in range(10):
            hi = vec.copy()
            hi[k] += eps
            lo = vec.copy()
            lo[k] -= eps
            f_hi = surrogate_value(params.from_vector(hi), trajs, rewards)
            f_lo = surrogate_value(params.from_vector(lo), trajs, rewards)
            numeric = (f_hi - f_lo) / (2 * eps)
            denom = max(abs(numeric), abs(grad[k]), 1e-8)
            assert abs(numeric - grad[k]) / denom < 1e-4, k

    def test_bandit_probability_increases_monotonically(self):
        # one-step bandit: action 3 always earns reward 1, others earn 0
        target = 3
        x0 = np.array([1.0, 0.5])
        params = init_policy(2, hidden=4, seed=3)
        config = TrainConfig(episodes_per_batch=16, learning_rate=0.5)
        rng = np.random.default_rng(42)
        probs_history = [action_distribution(params, x0)[target]]
        for _ in range(25):
            batch = []
            for _ in range(config.episodes_per_batch):
                probs = action_distribution(params, x0)
                a = int(rng.choice(6, p=probs))
                batch.append(make_traj([(x0, a)], reward=1.0 if a == target else 0.0))
            params, _ = reinforce_update(params, batch, config)
            probs_history.append(action_distribution(params, x0)[target])
        assert all(b >= a - 1e-12 for a, b in zip(probs_history, probs_history[1:]))
        assert probs_history[-1] > probs_history[0] + 0.3

    def test_estimator_matches_exact_enumeration_gradient(self):
        # two-step toy environment, rewards on a 6x6 table; the exact policy
        # gradient comes from finite differences of the enumerated expected
        # reward, fully independent of the analytic backprop path
        rng = np.random.default_rng(11)
        params = init_policy(2, hidden=2, seed=4)
        x0 = np.array([0.8, -0.3])
        x1 = {a: np.array([np.cos(a), np.sin(a)]) for a in range(6)}
        reward_table = rng.uniform(0.0, 1.0, size=(6, 6))
        reward_table[2, 4] = 1.0  # make the landscape non-flat

        def expected_reward(p: PolicyParams) -> float:
            p0 = action_distribution(p, x0)
            total = 0.0
            for a1 in range(6):
                p1 = action_distribution(p, x1[a1])
                for a2 in range(6):
                    total += p0[a1] * p1[a2] * reward_table[a1, a2]
            return float(total)

        vec = params.to_vector()
        exact = np.zeros_like(vec)
        eps = 1e-6
        for k in range(vec.size):
            hi = vec.copy()
            hi[k] += eps
            lo = vec.copy()
            lo[k] -= eps
            exact[k] = (
                expected_reward(params.from_vector(hi))
                - expected_reward(params.from_vector(lo))
            ) / (2 * eps)

        n_batches, m = 400, 24
        estimates = np.zeros((n_batches, vec.size))
        for b in range(n_batches):
            batch = []
            for _ in range(m):
                p0 = action_distribution(params, x0)
                a1 = int(rng.choice(6, p=p0))
                p1 = action_distribution(params, x1[a1])
                a2 = int(rng.choice(6, p=p1))
                batch.append(
                    make_traj([(x0, a1), (x1[a1], a2)], reward=float(reward_table[a1, a2]))
                )
            rewards = [t.reward for t in batch]
            estimates[b] = surrogate_gradient(params, batch, rewards).to_vector()

        mean = estimates.mean(axis=0)
        sem = estimates.std(axis=0, ddof=1) / np.sqrt(n_batches)
        for k in range(vec.size):
            assert abs(mean[k] - exact[k]) <= 3.0 * max(sem[k], 1e-12), (
                k,
                mean[k],
                exact[k],
                sem[k],
            )


class _StubModel:
    def __init__(self, classes):
        self.classes = classes


class _StubCache(SceneCache):
    """Cache whose classifier always answers with a fixed confidence,
    either naming the queried instance or deliberately missing it."""

    def __init__(self, manifest, correct: bool, score: float):
        super().__init__(manifest, _StubModel(sorted(manifest.instances)))
        self._correct = correct
        self._score = score

    def crop_probs(self, frame_id, instance_id):
        if self.scene.annotation_for(frame_id, instance_id) is None:
            return None
        classes = self.classifier.classes
        target = classes.index(instance_id)
        if not self._correct:
            target = (target + 1) % len(classes)
        probs = np.full(len(classes), (1.0 - self._score) / (len(classes) - 1))
        probs[target] = self._score
        return probs


class TestRolloutAndEvaluate:
    def test_rollout_deterministic_given_seed(self, labeled_quad_scene, quad_classifier):
        manifest, _ = labeled_quad_scene
        cache = SceneCache(manifest, quad_classifier)
        config = EpisodeConfig(max_steps=4)
        start = manifest.frames_with_instance("red_box")[0]
        policy = LearnedPolicy(init_policy(cache.frame_features(start).shape[0] + 5, seed=0))
        t1 = rollout(policy, cache, "red_box", config, np.random.default_rng(9), start)
        t2 = rollout(policy, cache, "red_box", config, np.random.default_rng(9), start)
        assert [s.frame_id for s in t1.steps] == [s.frame_id for s in t2.steps]
        assert [s.action for s in t1.steps] == [s.action for s in t2.steps]
        assert t1.reward == t2.reward

    def test_confident_classifier_stops_at_start_with_its_score(self, labeled_quad_scene):
        # a classifier that always names the target with 0.95 ends the episode
        # by confidence stop before any move, and the reward is that score
        manifest, _ = labeled_quad_scene
        cache = _StubCache(manifest, correct=True, score=0.95)
        start = manifest.frames_with_instance("red_box")[0]
        traj = rollout(
            baseline_policy("random"), cache, "red_box",
            EpisodeConfig(max_steps=5), np.random.default_rng(0), start,
        )
        assert traj.steps == []
        assert traj.reason == "confidence"
        assert abs(traj.reward - 0.95) < 1e-12

    def test_always_wrong_classifier_earns_zero(self, labeled_quad_scene):
        manifest, _ = labeled_quad_scene
        cache = _StubCache(manifest, correct=False, score=0.95)
        start = manifest.frames_with_instance("red_box")[0]
        traj = rollout(
            baseline_policy("random"), cache, "red_box",
            EpisodeConfig(max_steps=3), np.random.default_rng(0), start,
        )
        assert traj.reward == 0.0

    def test_trace_records_schema(self, labeled_quad_scene, quad_classifier):
        manifest, _ = labeled_quad_scene
        cache = SceneCache(manifest, quad_classifier)
        start = manifest.frames_with_instance("green_box")[0]
        traj = rollout(
            baseline_policy("random"),
            cache,
            "green_box",
            EpisodeConfig(max_steps=3),
            np.random.default_rng(4),
            start,
        )
        records = traj.to_records()
        assert records[0]["t"] == 0
        assert records[-1]["action"] is None
        for rec in records:
            assert set(rec) == {"t", "frame_id", "action", "box", "classifier_top1", "score"}

    def test_budget_zero_is_policy_invariant(self, labeled_quad_scene, quad_classifier):
        manifest, _ = labeled_quad_scene
        cache = SceneCache(manifest, quad_classifier)
        results = {}
        for kind in ("random", "forward"):
            res = evaluate_policy(baseline_policy(kind), [cache], budgets=[0], seed=5)
            results[kind] = res.overall[0]
        params = init_policy(cache.frame_features(manifest.frame_ids()[0]).shape[0] + 5, seed=1)
        res = evaluate_policy(LearnedPolicy(params), [cache], budgets=[0], seed=5)
        results["learned"] = res.overall[0]
        assert results["random"] == results["forward"] == results["learned"]

    def test_episode_counts_and_rewards_bounded(self, labeled_quad_scene, quad_classifier):
        manifest, _ = labeled_quad_scene
        cache = SceneCache(manifest, quad_classifier)
        res = evaluate_policy(baseline_policy("random"), [cache], budgets=[0, 2], seed=0)
        for budget in (0, 2):
            assert 0.0 <= res.overall[budget] <= 1.0
        assert res.episodes_per_budget == sum(
            len(manifest.frames_with_instance(i)) for i in sorted(manifest.instances)
        )

    def test_negative_budget_rejected(self, labeled_quad_scene, quad_classifier):
        manifest, _ = labeled_quad_scene
        cache = SceneCache(manifest, quad_classifier)
        with pytest.raises(PolicyError):
            evaluate_policy(baseline_policy("random"), [cache], budgets=[-1])


def test_policy_checkpoint_round_trip(tmp_path):
    params = init_policy(7, hidden=3, seed=6)
    save_policy(params, tmp_path / "p.json")
    loaded = load_policy(tmp_path / "p.json")
    np.testing.assert_array_equal(loaded.to_vector(), params.to_vector())
    x = np.random.default_rng(0).normal(size=7)
    np.testing.assert_array_equal(
        action_distribution(params, x), action_distribution(loaded, x)
    )


def test_divergence_guard():
    from scanwalk.recognition import DivergenceError

    params = init_policy(2, hidden=2, seed=0)
    bad = make_traj([(np.array([np.inf, 1.0]), 0)], reward=1.0)
    with np.errstate(all="ignore"), pytest.raises((DivergenceError, PolicyError)):
        reinforce_update(params, [bad], TrainConfig())
