import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sightreading.config import ConstraintSection, EnvSection, LearnerSection
from sightreading.learner import (
    DeterministicMDP,
    PolicyTable,
    RateAgent,
    TDAgent,
    ValueTable,
    greedy_policy,
    make_agent,
    policy_update,
    run_episode,
    rw_update,
    softmax_rows,
    td_sweep,
    td_value_update,
)
from sightreading.pomdp import SightReadingEnv, default_params
from sightreading.score import load_default_groups, load_default_score, parse_score


class TestRescorlaWagner:
    def test_arithmetic(self):
        V = ValueTable.zeros(3)
        rw_update(V, 1, 0.5, 1.0)
        assert list(V.values) == [0.0, 0.5, 0.0]

    def test_zero_surprise(self):
        V = ValueTable(np.array([0.3, -0.2]))
        rw_update(V, 0, 0.9, 0.0)
        assert list(V.values) == [0.3, -0.2]

    @pytest.mark.parametrize("v0, target", [(0.0, 1.0), (2.0, -0.5), (-1.0, 0.25)])
    def test_geometric_closed_form(self, v0, target):
        V = ValueTable(np.array([v0]))
        for t in range(1, 51):
            rw_update(V, 0, 0.3, target - V.values[0])
            assert abs(abs(V.values[0] - target) - abs(v0 - target) * 0.7 ** t) <= 1e-12

    def test_rejects_bad_rate(self):
        with pytest.raises(ValueError):
            rw_update(ValueTable.zeros(1), 0, 1.5, 1.0)
        with pytest.raises(KeyError):
            rw_update(ValueTable.zeros(1), 3, 0.5, 1.0)


class TestPolicy:
    def test_zero_step(self):
        pi = PolicyTable(np.array([[0.3, -0.1, 0.2]]))
        before = pi.row(0).copy()
        policy_update(pi, 0, 1, 0.0, 1.0)
        np.testing.assert_array_equal(pi.row(0), before)

    def test_positive_update_raises_probability(self):
        pi = PolicyTable.zeros(1, 2)
        policy_update(pi, 0, 0, 0.5, 1.0)
        assert pi.row(0)[0] > pi.row(0)[1]

    def test_negative_sign(self):
        pi = PolicyTable.zeros(1, 2)
        policy_update(pi, 0, 0, 0.5, -3.0)
        assert pi.preferences[0, 0] == -0.5

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=9), st.floats(-100, 100))
    def test_shift_invariance(self, prefs, shift):
        h = np.array(prefs)
        np.testing.assert_allclose(softmax_rows(h + shift), softmax_rows(h), atol=1e-12)

    @given(st.integers(0, 1000))
    @settings(max_examples=30, deadline=None)
    def test_rows_stay_distributions(self, seed):
        rng = np.random.default_rng(seed)
        pi = PolicyTable.zeros(4, 5)
        for _ in range(500):
            policy_update(pi, int(rng.integers(4)), int(rng.integers(5)), float(rng.random()),
                          float(rng.normal()))
        dist = pi.distribution
        assert np.all(dist >= 0)
        np.testing.assert_allclose(dist.sum(axis=1), 1.0, atol=1e-9)

    def test_dominant_action_approaches_one(self):
        pi = PolicyTable.zeros(1, 3)
        for _ in range(100):
            policy_update(pi, 0, 2, 1.0, 1.0)
        assert pi.row(0)[2] > 1 - 1e-12

    def test_bad_index(self):
        with pytest.raises(KeyError):
            policy_update(PolicyTable.zeros(1, 2), 0, 2, 0.5, 1.0)


class TestTD:
    def test_overwrite(self):
        V = ValueTable.zeros(2)
        td_value_update(V, 0, 0.7, [1], gamma=0.0, alpha=1.0)
        assert V.values[0] == pytest.approx(0.7)

    def test_zero_step(self):
        V = ValueTable(np.array([0.1, 0.2]))
        td_value_update(V, 0, 5.0, [1], gamma=0.9, alpha=0.0)
        assert list(V.values) == [0.1, 0.2]

    def test_touches_one_entry(self):
        V = ValueTable(np.array([0.1, 0.2, 0.3]))
        td_value_update(V, 1, 1.0, [0, 2], gamma=0.5, alpha=0.5)
        assert V.values[0] == 0.1 and V.values[2] == 0.3

    def test_chain_fixed_point(self):
        mdp = DeterministicMDP((0.0, 0.0, 1.0), ((1,), (2,), ()))
        V = ValueTable.zeros(3)
        for _ in range(1000):
            if td_sweep(V, mdp, 0.9, alpha=0.5) < 1e-12:
                break
        np.testing.assert_allclose(V.values, [0.81, 0.9, 1.0], atol=1e-6)

    def test_gamma_range(self):
        with pytest.raises(ValueError):
            td_value_update(ValueTable.zeros(2), 0, 0.0, [1], gamma=1.0)


class TestGreedy:
    def test_tie_goes_to_first(self):
        V = ValueTable(np.ones(3))
        options = {s: [(0.0, 0), (0.0, 1), (0.0, 2)] for s in range(3)}
        assert greedy_policy(V, options) == {0: 0, 1: 0, 2: 0}

    def test_dominant(self):
        V = ValueTable(np.array([0.0, 5.0, 0.0]))
        assert greedy_policy(V, {0: [(0.0, 0), (0.0, 1), (0.0, 2)]})[0] == 1

    @given(st.integers(0, 10_000))
    def test_matches_lookahead_scan(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 6))
        V = ValueTable(rng.normal(size=n))
        options = {s: [(float(rng.normal()), int(rng.integers(n)) if rng.random() > 0.2 else None)
                       for _ in range(int(rng.integers(1, 4)))] for s in range(n)}
        got = greedy_policy(V, options, 0.9)
        for s, opts in options.items():
            best, best_a = -np.inf, None
            for a, (r, s2) in enumerate(opts):
                q = r + 0.9 * (V.values[s2] if s2 is not None else 0.0)
                if q > best:
                    best, best_a = q, a
            assert got[s] == best_a

    @given(st.integers(0, 10_000), st.floats(0.1, 10))
    def test_affine_invariance(self, seed, scale):
        rng = np.random.default_rng(seed)
        V = ValueTable(rng.normal(size=4))
        opts = {s: [(0.0, int(j)) for j in rng.permutation(4)] for s in range(4)}
        scaled = ValueTable(V.values * scale + 3.0)
        assert greedy_policy(V, opts) == greedy_policy(scaled, opts)


def make_env(text=None, seed=0, **env_kw):
    score = parse_score(text) if text else load_default_score()
    groups = load_default_groups()
    return SightReadingEnv(score, groups, default_params(3, len(groups)), np.random.default_rng([seed, 0]),
                           window=4, env_cfg=EnvSection(**env_kw), constraint_cfg=ConstraintSection())


class TestAgents:
    def test_one_note_phrase(self):
        env = make_env("C4:q | E4:q")
        agent = RateAgent(env.n_states, env.n_actions, 0)
        res = run_episode(env, agent, 0)
        assert len(res.records) == 1
        assert len(res.gamma) == 1

    def test_zero_exploration_repeats(self):
        env = make_env("C4:q E4:q D4:q", pitch_noise=0.0, timing_noise=0.0)
        agent = RateAgent(env.n_states, env.n_actions, 0, LearnerSection(epsilon=0.0))
        for ep in range(200):
            run_episode(env, agent, ep)
        seqs = [[r.action for r in run_episode(env, agent, 200 + k).records] for k in range(5)]
        greedy = [[agent.pi.greedy(r.from_state.observable) for r in run_episode(env, agent, 300).records]]
        assert all(s == seqs[0] for s in seqs)
        assert seqs[0] == greedy[0]

    def test_round_robin(self):
        env = make_env()
        agent = TDAgent(env.n_states, env.n_actions, 0)
        assert [run_episode(env, agent, e).phrase_index for e in range(6)] == [0, 1, 2, 0, 1, 2]

    def test_rate_episode_metrics(self):
        env = make_env()
        agent = make_agent("rate", env, 3)
        res = run_episode(env, agent, 0)
        m = res.metrics()
        assert 0.0 <= m["zeta_selected"] <= 1.0
        assert m["zeta_selected"] == max(res.zetas)
        assert agent.zeta == m["zeta_selected"]

    def test_td_greedy_on_successors(self):
        env = make_env()
        agent = make_agent("td", env, 3, LearnerSection(epsilon=0.0))
        env.reset(0)
        succ = env.successors()
        agent.V.values[:] = 0.0
        agent.V.values[succ[6]] = 1.0
        assert agent.select(env.state.observable, 0.0, succ) == succ.index(succ[6])

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            make_agent("sarsa", make_env(), 0)
