"""Trainer tests: return recursion identities, the parameter store's
transactional behavior, episode gradient determinism, and training loops."""

import threading
from dataclasses import replace

import numpy as np
import pytest

from vecoffload.a3c import (
    GlobalStore,
    Hyperparams,
    advantage,
    apply_async,
    build_networks,
    episode_returns,
    evaluate,
    k_step_return,
    online_learn,
    run_episode,
    train,
    write_training_csv,
)
from vecoffload.env import OffloadEnv
from vecoffload.errors import DomainError
from vecoffload.nn import Gradients, apply_sgd, forward_value, init_params
from vecoffload.scenario import (
    CoverageSpec,
    ScenarioConfig,
    ServiceSpec,
    SpeedSpec,
    VnSpec,
    build_scenario,
    bundled_config_path,
    load_config,
)


def tiny_scenario(task_count=3, seed=21):
    config = ScenarioConfig(
        service=ServiceSpec(
            task_count=task_count, topology="sequence",
            compute_mixture=((max(task_count, 1), 1000.0),), compute_std=0.0,
            dep_data_mean=1.0e6, dep_data_std=0.0,
            interactive_data_mean=2.0e6, interactive_data_std=0.0,
        ),
        local_cpu_freq=100.0,
        freq_jitter_std=0.0,
        bs=CoverageSpec(cpu_freqs=(500.0,), residence_rate=0.05, handoff_delay=1.0),
        ap=CoverageSpec(cpu_freqs=(400.0,), residence_rate=0.1, handoff_delay=0.5),
        vn=VnSpec(cpu_freqs=(150.0,), z_min=10.0, z_max=30.0, unit=10.0,
                  p=0.25, q=0.25, beta=0.0, comm_range_state=1),
        quota_bs=1, quota_ap=1, quota_vn=1,
        speed=SpeedSpec(v_min=20.0, v_max=20.0),
        seed=seed,
    )
    return build_scenario(config)


def tiny_hyper(**over):
    base = dict(gamma=0.9, entropy_coef=0.01, lr_actor=1e-3, lr_critic=1e-3,
                workers=1, episodes=5, seed=3, hidden_sizes=(16, 16))
    base.update(over)
    return Hyperparams(**base)


def grads_equal(a: Gradients, b: Gradients) -> bool:
    return all(bytes(x) == bytes(y) for x, y in zip(a.weights, b.weights)) \
        and all(bytes(x) == bytes(y) for x, y in zip(a.biases, b.biases))


# -- returns -----------------------------------------------------------------


class TestKStepReturn:
    def test_one_reward_with_bootstrap(self):
        assert k_step_return([1.0], bootstrap=2.0, gamma=0.5) == 2.0

    def test_two_rewards_with_bootstrap(self):
        assert k_step_return([1.0, 1.0], bootstrap=2.0, gamma=0.5) == 2.0

    def test_gamma_zero_is_myopic(self):
        assert k_step_return([3.0, 99.0, -5.0], bootstrap=7.0, gamma=0.0) == 3.0

    def test_empty_rewards_raise(self):
        with pytest.raises(DomainError):
            k_step_return([], bootstrap=0.0, gamma=0.5)

    def test_recursion_identity_on_random_sequences(self):
        # the backward running recursion R = r + gamma * R must equal the
        # full-depth return at every step, exactly
        rng = np.random.default_rng(77)
        for _ in range(25):
            m = int(rng.integers(1, 12))
            gamma = float(rng.uniform(0.0, 1.0))
            rewards = rng.normal(size=m).tolist()
            running = []
            g = 0.0
            for r in reversed(rewards):
                g = r + gamma * g
                running.append(g)
            running.reverse()
            full = episode_returns(rewards, gamma)
            for t in range(m):
                assert running[t] == full[t]
                assert running[t] == k_step_return(rewards[t:], 0.0, gamma)


class TestAdvantage:
    def test_subtraction(self):
        assert advantage(2.0, 1.5) == 0.5

    def test_zero_when_equal(self):
        assert advantage(3.3, 3.3) == 0.0

    def test_sign_flips_across_value(self):
        assert advantage(1.0, 0.5) > 0 > advantage(1.0, 1.5)

    def test_non_finite_raises(self):
        with pytest.raises(DomainError):
            advantage(float("nan"), 0.0)


class TestTruncatedReturns:
    def test_one_step_bootstraps_next_value(self):
        got = episode_returns([1.0, 2.0, 3.0], gamma=0.5,
                              values=[10.0, 20.0, 30.0], n_step=1)
        np.testing.assert_allclose(got, [1 + 0.5 * 20, 2 + 0.5 * 30, 3.0])

    def test_two_step_window(self):
        got = episode_returns([1.0, 2.0, 3.0], gamma=0.5,
                              values=[10.0, 20.0, 30.0], n_step=2)
        np.testing.assert_allclose(got, [1 + 0.5 * 2 + 0.25 * 30, 3.5, 3.0])

    def test_depth_beyond_episode_equals_full(self):
        rewards = [1.0, -2.0, 0.5]
        full = episode_returns(rewards, gamma=0.7)
        deep = episode_returns(rewards, gamma=0.7, values=[0.0] * 3, n_step=50)
        np.testing.assert_allclose(deep, full)

    def test_truncation_needs_values(self):
        with pytest.raises(DomainError):
            episode_returns([1.0], gamma=0.5, n_step=1)


# -- store -------------------------------------------------------------------


class TestGlobalStore:
    def setup_method(self):
        self.actor = init_params((4, 8, 3), seed=1, out_kind="softmax")
        self.critic = init_params((4, 8, 1), seed=2, out_kind="identity")

    def rand_grads(self, params, seed):
        rng = np.random.default_rng(seed)
        return Gradients(
            weights=tuple(rng.normal(size=w.shape) for w in params.weights),
            biases=tuple(rng.normal(size=b.shape) for b in params.biases))

    def test_versions_count_applies(self):
        store = GlobalStore(self.actor, self.critic, tiny_hyper())
        assert store.version == 0
        da = self.rand_grads(self.actor, 3)
        dc = self.rand_grads(self.critic, 4)
        assert apply_async(store, da, dc) == 1
        assert apply_async(store, da, dc) == 2
        assert store.version == 2

    def test_single_apply_equals_sgd(self):
        hyper = tiny_hyper(lr_actor=0.01, lr_critic=0.02)
        store = GlobalStore(self.actor, self.critic, hyper)
        da = self.rand_grads(self.actor, 5)
        dc = self.rand_grads(self.critic, 6)
        store.apply(da, dc)
        actor, critic, version = store.snapshot()
        want_actor = apply_sgd(self.actor, da.scaled(-1.0), 0.01)
        want_critic = apply_sgd(self.critic, dc, 0.02)
        assert version == 1
        for got, want in zip(actor.weights, want_actor.weights):
            assert bytes(got) == bytes(want)
        for got, want in zip(critic.weights, want_critic.weights):
            assert bytes(got) == bytes(want)

    def test_sgd_applies_commute(self):
        g1a, g1c = self.rand_grads(self.actor, 7), self.rand_grads(self.critic, 8)
        g2a, g2c = self.rand_grads(self.actor, 9), self.rand_grads(self.critic, 10)
        s12 = GlobalStore(self.actor, self.critic, tiny_hyper())
        s12.apply(g1a, g1c)
        s12.apply(g2a, g2c)
        s21 = GlobalStore(self.actor, self.critic, tiny_hyper())
        s21.apply(g2a, g2c)
        s21.apply(g1a, g1c)
        a12, c12, _ = s12.snapshot()
        a21, c21, _ = s21.snapshot()
        for x, y in zip(a12.weights + c12.weights, a21.weights + c21.weights):
            np.testing.assert_allclose(x, y, rtol=1e-12, atol=1e-15)

    def test_grad_clip_caps_update(self):
        hyper = tiny_hyper(grad_clip=1e-3, lr_actor=1.0, lr_critic=1.0)
        store = GlobalStore(self.actor, self.critic, hyper)
        da = self.rand_grads(self.actor, 11).scaled(1e6)
        dc = self.rand_grads(self.critic, 12).scaled(1e6)
        store.apply(da, dc)
        actor, critic, _ = store.snapshot()
        moved = 0.0
        for new, old in zip(actor.weights + critic.weights,
                            self.actor.weights + self.critic.weights):
            moved += float(((new - old) ** 2).sum())
        assert moved ** 0.5 <= 2 * 1e-3 + 1e-12

    def test_concurrent_applies_are_counted(self):
        store = GlobalStore(self.actor, self.critic, tiny_hyper())
        per_thread = 50
        threads = []

        def work(seed):
            da = self.rand_grads(self.actor, seed)
            dc = self.rand_grads(self.critic, seed + 1)
            for _ in range(per_thread):
                store.apply(da, dc)

        for i in range(4):
            threads.append(threading.Thread(target=work, args=(100 + 2 * i,)))
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert store.version == 4 * per_thread

    def test_rmsprop_moves_params(self):
        hyper = tiny_hyper(optimizer="rmsprop")
        store = GlobalStore(self.actor, self.critic, hyper)
        da = self.rand_grads(self.actor, 13)
        dc = self.rand_grads(self.critic, 14)
        store.apply(da, dc)
        actor, _, _ = store.snapshot()
        assert any(bytes(a) != bytes(b)
                   for a, b in zip(actor.weights, self.actor.weights))

    def test_rmsprop_first_step_closed_form(self):
        # one apply from a fresh accumulator:
        # delta = lr * g / sqrt(0.01 * g^2 + eps), ascent for the actor
        eps = 0.5
        hyper = tiny_hyper(optimizer="rmsprop", rms_epsilon=eps,
                           lr_actor=0.02, lr_critic=0.03)
        store = GlobalStore(self.actor, self.critic, hyper)
        da = self.rand_grads(self.actor, 15)
        dc = self.rand_grads(self.critic, 16)
        store.apply(da, dc)
        actor, critic, _ = store.snapshot()
        for before, after, g in zip(self.actor.weights, actor.weights,
                                    da.weights):
            want = before + 0.02 * g / np.sqrt(0.01 * g * g + eps)
            assert np.allclose(after, want, rtol=0, atol=1e-15)
        for before, after, g in zip(self.critic.weights, critic.weights,
                                    dc.weights):
            want = before - 0.03 * g / np.sqrt(0.01 * g * g + eps)
            assert np.allclose(after, want, rtol=0, atol=1e-15)


# -- episodes ----------------------------------------------------------------


class TestRunEpisode:
    def test_gradients_are_deterministic(self):
        scenario = tiny_scenario()
        hyper = tiny_hyper()
        actor, critic = build_networks(scenario, hyper)
        env = OffloadEnv(scenario)
        t1, da1, dc1, s1 = run_episode(env, actor, critic, hyper, episode=4)
        t2, da2, dc2, s2 = run_episode(env, actor, critic, hyper, episode=4)
        assert s1 == s2
        assert grads_equal(da1, da2)
        assert grads_equal(dc1, dc2)
        assert [r.action_slot for r in t1.records] == \
            [r.action_slot for r in t2.records]

    def test_different_episode_changes_rng(self):
        scenario = tiny_scenario()
        hyper = tiny_hyper()
        actor, critic = build_networks(scenario, hyper)
        env = OffloadEnv(scenario)
        picks = set()
        for episode in range(12):
            trace, _, _, _ = run_episode(env, actor, critic, hyper, episode)
            picks.add(tuple(r.action_slot for r in trace.records))
        assert len(picks) > 1

    def test_greedy_mode_ignores_sampling(self):
        scenario = tiny_scenario()
        hyper = tiny_hyper()
        actor, critic = build_networks(scenario, hyper)
        env = OffloadEnv(scenario)
        t1, _, _, _ = run_episode(env, actor, critic, hyper, 0, greedy=True)
        t2, _, _, _ = run_episode(env, actor, critic, hyper, 0, greedy=True)
        assert [r.action_slot for r in t1.records] == \
            [r.action_slot for r in t2.records]

    def test_single_task_episode_loss_identity(self):
        scenario = tiny_scenario(task_count=1)
        hyper = tiny_hyper(gamma=0.37)
        actor, critic = build_networks(scenario, hyper)
        env = OffloadEnv(scenario)
        trace, _, _, stats = run_episode(env, actor, critic, hyper, episode=2)
        r1 = trace.masked_rewards()[0]
        v1 = forward_value(critic, trace.records[0].state)
        assert stats["value_loss"] == pytest.approx((r1 - v1) ** 2, rel=1e-12)
        assert stats["return"] == pytest.approx(r1, rel=1e-12)


# -- training ----------------------------------------------------------------


class TestTrain:
    def test_single_thread_bit_reproducible(self, tmp_path):
        scenario = tiny_scenario()
        hyper = tiny_hyper(episodes=6)
        a = train(scenario, hyper)
        b = train(scenario, hyper)
        assert a.rows == b.rows
        for x, y in zip(a.actor.weights, b.actor.weights):
            assert bytes(x) == bytes(y)
        for x, y in zip(a.critic.weights, b.critic.weights):
            assert bytes(x) == bytes(y)
        pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
        write_training_csv(pa, a)
        write_training_csv(pb, b)
        assert pa.read_bytes() == pb.read_bytes()

    def test_row_schema_and_order(self):
        report = train(tiny_scenario(), tiny_hyper(episodes=4))
        assert [r["episode"] for r in report.rows] == [0, 1, 2, 3]
        assert all(r["worker"] == 0 for r in report.rows)
        assert [r["store_version"] for r in report.rows] == [1, 2, 3, 4]
        assert report.episode_count == 4

    def test_multi_worker_runs_every_episode_once(self):
        scenario = tiny_scenario()
        hyper = tiny_hyper(episodes=24, workers=4)
        report = train(scenario, hyper)
        assert [r["episode"] for r in report.rows] == list(range(24))
        assert {r["worker"] for r in report.rows} <= set(range(4))
        assert max(r["store_version"] for r in report.rows) == 24

    def test_zero_episodes_keeps_initial_params(self):
        scenario = tiny_scenario()
        hyper = tiny_hyper(episodes=0)
        actor, critic = build_networks(scenario, hyper)
        report = online_learn(actor, critic, scenario, hyper)
        assert report.rows == ()
        for x, y in zip(report.actor.weights, actor.weights):
            assert bytes(x) == bytes(y)
        for x, y in zip(report.critic.weights, critic.weights):
            assert bytes(x) == bytes(y)

    def test_online_learn_continues_from_given_params(self):
        scenario = tiny_scenario()
        hyper = tiny_hyper(episodes=3)
        first = train(scenario, hyper)
        resumed = online_learn(first.actor, first.critic, scenario, hyper)
        assert any(bytes(x) != bytes(y) for x, y in
                   zip(resumed.actor.weights, first.actor.weights))

    def test_entropy_shrinks_without_bonus(self):
        # dominant-node preset, entropy regularization off: exploration
        # should only ever collapse (trailing-window medians)
        config = load_config(bundled_config_path("dominant_node.toml"))
        scenario = build_scenario(config)
        hyper = Hyperparams.from_scenario(scenario, episodes=1200,
                                          entropy_coef=0.0)
        report = train(scenario, hyper)
        entropies = [r["mean_entropy"] for r in report.rows]
        first = float(np.median(entropies[:200]))
        last = float(np.median(entropies[-200:]))
        assert last <= first + 1e-9


class TestOnlineLearn:
    def test_same_distribution_does_not_degrade(self):
        config = load_config(bundled_config_path("dominant_node.toml"))
        scenario = build_scenario(config)
        hyper = Hyperparams.from_scenario(scenario, episodes=2500)
        pre = train(scenario, hyper)
        before = evaluate(pre.actor, scenario, episodes=100, seed=500,
                          gamma=hyper.gamma)
        more = Hyperparams.from_scenario(scenario, episodes=800, seed=99)
        post = online_learn(pre.actor, pre.critic, scenario, more)
        after = evaluate(post.actor, scenario, episodes=100, seed=500,
                         gamma=hyper.gamma)
        assert after["mean_service_delay"] <= \
            before["mean_service_delay"] * 1.05

    def test_adapts_to_environment_shift(self):
        # pretrain where the BS dominates, then swap the BS and AP speeds:
        # the frozen policy keeps offloading to the now-slow node, the
        # online learner re-routes
        config = load_config(bundled_config_path("dominant_node.toml"))
        scenario = build_scenario(config)
        hyper = Hyperparams.from_scenario(scenario, episodes=2500)
        pre = train(scenario, hyper)

        shifted_config = replace(
            config,
            bs=replace(config.bs, cpu_freqs=(50.0,)),
            ap=replace(config.ap, cpu_freqs=(500.0,)),
        )
        shifted = build_scenario(shifted_config)
        frozen = evaluate(pre.actor, shifted, episodes=500, seed=321,
                          gamma=hyper.gamma)
        adapt = Hyperparams.from_scenario(shifted, episodes=2500, seed=7)
        post = online_learn(pre.actor, pre.critic, shifted, adapt)
        adapted = evaluate(post.actor, shifted, episodes=500, seed=321,
                           gamma=hyper.gamma)
        assert adapted["mean_service_delay"] <= frozen["mean_service_delay"]
        # the swap moved the fast node from the BS slot to the AP slot
        assert frozen["slot_fractions"][1] > 0.95
        assert adapted["slot_fractions"][2] > 0.95


class TestEvaluate:
    def test_repeatable_metrics(self):
        scenario = tiny_scenario()
        hyper = tiny_hyper()
        actor, _ = build_networks(scenario, hyper)
        a = evaluate(actor, scenario, episodes=5, seed=40, gamma=0.9)
        b = evaluate(actor, scenario, episodes=5, seed=40, gamma=0.9)
        assert a == b

    def test_undiscounted_objective_identity(self):
        # gamma = 1: J is exactly -(mean service delay) / M
        scenario = tiny_scenario(task_count=4)
        hyper = tiny_hyper()
        actor, _ = build_networks(scenario, hyper)
        got = evaluate(actor, scenario, episodes=6, seed=11, gamma=1.0)
        assert got["objective"] == pytest.approx(
            -got["mean_service_delay"] / 4.0, rel=1e-12)

    def test_as_printed_objective_scales_the_sum(self):
        scenario = tiny_scenario(task_count=3)
        hyper = tiny_hyper()
        actor, _ = build_networks(scenario, hyper)
        plain = evaluate(actor, scenario, episodes=4, seed=5, gamma=1.0,
                         objective_as_printed=True)
        default = evaluate(actor, scenario, episodes=4, seed=5, gamma=1.0)
        # gamma = 1 collapses both exponent conventions
        assert plain["objective"] == pytest.approx(default["objective"], rel=1e-12)
        printed = evaluate(actor, scenario, episodes=4, seed=5, gamma=0.5,
                           objective_as_printed=True)
        per_t = evaluate(actor, scenario, episodes=4, seed=5, gamma=0.5)
        assert printed["objective"] != per_t["objective"]

    def test_slot_fractions_sum_to_one(self):
        scenario = tiny_scenario()
        hyper = tiny_hyper()
        actor, _ = build_networks(scenario, hyper)
        got = evaluate(actor, scenario, episodes=3, seed=0, gamma=0.9)
        assert sum(got["slot_fractions"]) == pytest.approx(1.0, rel=1e-12)
        assert len(got["slot_fractions"]) == 4

    def test_zero_episodes_rejected(self):
        scenario = tiny_scenario()
        hyper = tiny_hyper()
        actor, _ = build_networks(scenario, hyper)
        with pytest.raises(DomainError):
            evaluate(actor, scenario, episodes=0, seed=0, gamma=0.9)


class TestHyperparams:
    def test_bounds(self):
        with pytest.raises(DomainError):
            tiny_hyper(gamma=1.5)
        with pytest.raises(DomainError):
            tiny_hyper(entropy_coef=-0.1)
        with pytest.raises(DomainError):
            tiny_hyper(workers=0)
        with pytest.raises(DomainError):
            tiny_hyper(n_step=0)
        with pytest.raises(DomainError):
            tiny_hyper(optimizer="adam")
        with pytest.raises(DomainError):
            tiny_hyper(grad_clip=0.0)
        with pytest.raises(DomainError):
            tiny_hyper(rms_epsilon=0.0)

    def test_from_scenario_reads_training_spec(self):
        config = load_config(bundled_config_path("reference.toml"))
        scenario = build_scenario(config)
        hyper = Hyperparams.from_scenario(scenario)
        assert hyper.workers == 4
        assert hyper.gamma == 0.99
        assert hyper.entropy_coef == 0.01
        assert hyper.hidden_sizes == (64, 64, 64)
        assert hyper.episodes == 80000
        assert hyper.seed == scenario.config.seed
        assert hyper.n_step == 1
        assert hyper.rms_epsilon == 0.01
