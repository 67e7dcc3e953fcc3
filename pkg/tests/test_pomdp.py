import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sightreading.config import ConstraintSection, EnvSection
from sightreading.constraints import ErrorPair
from sightreading.pomdp import (
    CompositeState,
    ParamSet,
    RewardBaseline,
    SightReadingEnv,
    default_params,
    marginal_action_prob,
    reward_from_errors,
    state_likelihood,
    transition_weight,
    weighted_prediction_error,
)
from sightreading.score import load_default_groups, load_default_score


def brute_force_beta(s, history, eta):
    """Sum over every hidden path consistent with ``history`` and the two observables."""
    hist = list(history) + ([None] if len(history) == 1 else [])
    H = eta.n_hidden
    num = den = 0.0
    for path in itertools.product(range(H), repeat=len(hist)):
        if any(h is not None and h != p for h, p in zip(hist, path)):
            continue
        w = eta.hidden_prior[path[0]]
        for a, b in zip(path, path[1:]):
            w *= eta.hidden_transition[a, b]
        den += w
        ht, hn = path[-2], path[-1]
        for o_next in range(eta.n_observable):
            if o_next != s:
                num += w * eta.emission[ht, s] * eta.emission[hn, o_next]
    return num / den


def _stochastic(rng, shape):
    x = rng.random(shape) + 0.05
    return x / x.sum(axis=-1, keepdims=True)


def random_params(rng, n_hidden, n_groups):
    return ParamSet(_stochastic(rng, (n_hidden, n_groups)), _stochastic(rng, n_hidden),
                    _stochastic(rng, (n_hidden, n_hidden)))


@st.composite
def beta_cases(draw):
    H = draw(st.integers(1, 4))
    G = draw(st.integers(1, 4))
    seed = draw(st.integers(0, 2**32 - 1))
    eta = random_params(np.random.default_rng(seed), H, G)
    hist = draw(st.lists(st.one_of(st.none(), st.integers(0, H - 1)), min_size=1, max_size=5))
    s = draw(st.integers(0, G - 1))
    return s, hist, eta


class TestLikelihood:
    def test_product(self):
        eta = ParamSet([[0.8, 0.2], [0.5, 0.5]], [0.5, 0.5], np.eye(2))
        assert state_likelihood(CompositeState(0, 0), eta) == pytest.approx(0.4)

    def test_certainty(self):
        eta = ParamSet([[1.0]], [1.0], [[1.0]])
        assert state_likelihood(CompositeState(0, 0), eta) == 1.0

    @given(st.integers(1, 5), st.integers(1, 6), st.integers(0, 1000))
    def test_sums_to_one(self, H, G, seed):
        eta = random_params(np.random.default_rng(seed), H, G)
        total = sum(state_likelihood(CompositeState(o, h), eta) for o in range(G) for h in range(H))
        assert abs(total - 1.0) < 1e-9

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            state_likelihood(CompositeState(5, 0), default_params(3, 2))

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            ParamSet([[0.5, 0.4]], [1.0], [[1.0]])
        with pytest.raises(ValueError):
            ParamSet([[1.5, -0.5]], [1.0], [[1.0]])


class TestMarginal:
    def test_dot(self):
        assert marginal_action_prob([0.6, 0.2], [0.5, 0.5]) == pytest.approx(0.4)

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=6), st.data())
    def test_degenerate_prior(self, lik, data):
        j = data.draw(st.integers(0, len(lik) - 1))
        prior = [0.0] * len(lik)
        prior[j] = 1.0
        assert marginal_action_prob(lik, prior) == pytest.approx(lik[j])

    @given(st.floats(0, 1), st.integers(1, 6), st.integers(0, 100))
    def test_constant_likelihood(self, c, n, seed):
        prior = _stochastic(np.random.default_rng(seed), n)
        assert marginal_action_prob([c] * n, prior) == pytest.approx(c)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            marginal_action_prob([0.5], [0.5, 0.5])


class TestTransitionWeight:
    def test_deterministic_emission_change(self):
        eta = ParamSet(np.eye(2), [0.5, 0.5], [[0.5, 0.5], [0.5, 0.5]])
        assert transition_weight(0, [0, 1], eta) == pytest.approx(1.0)

    def test_zero_support(self):
        eta = ParamSet(np.eye(2), [0.5, 0.5], [[0.5, 0.5], [0.5, 0.5]])
        assert transition_weight(1, [0, 1], eta) == 0.0

    def test_three_hidden_two_groups_length_four(self):
        eta = random_params(np.random.default_rng(11), 3, 2)
        for hist in itertools.product(range(3), repeat=4):
            for s in range(2):
                assert abs(transition_weight(s, hist, eta) - brute_force_beta(s, hist, eta)) < 1e-9

    @given(beta_cases())
    @settings(max_examples=300, deadline=None)
    def test_matches_enumeration(self, case):
        s, hist, eta = case
        beta = transition_weight(s, hist, eta)
        assert 0.0 <= beta <= 1.0
        assert abs(beta - brute_force_beta(s, hist, eta)) < 1e-9

    def test_errors(self):
        eta = default_params(3, 2)
        with pytest.raises(IndexError):
            transition_weight(2, [0], eta)
        with pytest.raises(IndexError):
            transition_weight(0, [0, 3], eta)
        with pytest.raises(ValueError):
            transition_weight(0, [], eta)


class TestPredictionError:
    def test_arithmetic(self):
        b = RewardBaseline(rho=0.2, count=1)
        assert weighted_prediction_error(0.5, 1.0, b) == pytest.approx(0.4)

    @given(st.floats(-1, 1))
    def test_zero_beta(self, r):
        assert weighted_prediction_error(0.0, r, RewardBaseline()) == 0.0

    def test_constant_stream_converges(self):
        b = RewardBaseline()
        deltas = [weighted_prediction_error(1.0, 0.7, b) for _ in range(50)]
        assert deltas[0] == pytest.approx(0.7)
        assert all(abs(d) < 1e-12 for d in deltas[1:])

    @given(st.lists(st.floats(-1, 1), min_size=1, max_size=50))
    def test_baseline_bounded(self, rewards):
        b = RewardBaseline()
        for r in rewards:
            b.update(r)
            assert min(rewards) - 1e-12 <= b.rho <= max(rewards) + 1e-12

    def test_beta_range(self):
        with pytest.raises(ValueError):
            weighted_prediction_error(1.5, 0.0, RewardBaseline())


class TestReward:
    def test_perfect(self):
        assert reward_from_errors(ErrorPair(0.0, 0.0), True) == 1.0

    def test_errors_lower_reward(self):
        assert reward_from_errors(ErrorPair(0.4, 0.2), False) == pytest.approx(1 - 0.3 / 2)

    @given(st.floats(0, 100), st.floats(0, 100), st.booleans())
    def test_range(self, d1, d2, correct):
        assert -1.0 <= reward_from_errors(ErrorPair(d1, d2), correct) <= 1.0


def make_env(seed=0, eta=None, **env_kw):
    groups = load_default_groups()
    eta = eta or default_params(3, len(groups))
    cfg = EnvSection(**env_kw)
    return SightReadingEnv(load_default_score(), groups, eta, np.random.default_rng(seed),
                           window=4, env_cfg=cfg, constraint_cfg=ConstraintSection())


class TestEnv:
    def test_shapes(self):
        env = make_env()
        assert env.n_actions == 9
        assert env.n_states == 10
        assert len(env.phrases) == 3

    def test_perfect_step_gives_max_reward(self):
        env = make_env(pitch_noise=0.0, timing_noise=0.0)
        env.reset(0)
        rec = env.step(env.correct_action())
        assert rec.correct
        assert rec.reward == 1.0

    def test_identity_hidden_dynamics(self):
        groups = load_default_groups()
        base = default_params(3, len(groups))
        eta = ParamSet(base.emission, base.hidden_prior, np.eye(3))
        env = make_env(seed=3, eta=eta)
        rng = np.random.default_rng(0)
        for ep in range(30):
            h0 = env.reset(ep).hidden
            while not env.done:
                rec = env.step(int(rng.integers(env.n_actions)))
                assert rec.from_state.hidden == rec.to_state.hidden == h0

    def test_flag_marks_group_change(self):
        env = make_env(seed=1)
        rng = np.random.default_rng(1)
        for ep in range(20):
            env.reset(ep)
            while not env.done:
                rec = env.step(int(rng.integers(env.n_actions)))
                assert rec.flag == int(rec.from_state.observable != rec.to_state.observable)

    def test_flag_frequency_matches_enumeration(self):
        """Uniform random actions: phi frequency vs. the exact group-change probability."""
        env = make_env(seed=5)
        A = env.n_actions
        expected_per_phrase = []
        for p in range(len(env.phrases)):
            env.reset(p)
            ep = env.episode
            currents = [ep.current] + list(ep.notes[:-1])
            prev_groups = [ep.observable]
            total = 0.0
            for i, cur in enumerate(currents):
                new_groups = [env.group_of(cur.pitch_class, env.target_note(cur, a)[0]) for a in range(A)]
                total += np.mean([[g != old for g in new_groups] for old in prev_groups])
                prev_groups = new_groups
            expected_per_phrase.append(total)

        rng = np.random.default_rng(99)
        counts, steps, episode = [], 0, 0
        while steps < 10_000:
            env.reset(episode % len(env.phrases))
            c = 0
            while not env.done:
                c += env.step(int(rng.integers(A))).flag
                steps += 1
            counts.append(c)
            episode += 1
        counts = np.array(counts, dtype=float)
        expected = np.array([expected_per_phrase[e % len(env.phrases)] for e in range(episode)])
        resid = counts - expected
        se = resid.std(ddof=1) * np.sqrt(len(resid))
        assert abs(resid.sum()) <= 3 * se

    def test_seeded_determinism(self):
        def trace(seed):
            env = make_env(seed=seed)
            rng = np.random.default_rng(0)
            out = []
            for ep in range(6):
                env.reset(ep)
                while not env.done:
                    out.append(env.step(int(rng.integers(env.n_actions))))
            return out

        assert trace(4) == trace(4)

    def test_invalid_action(self):
        env = make_env()
        env.reset(0)
        with pytest.raises(ValueError):
            env.step(9)

    def test_step_after_done(self):
        env = make_env()
        env.reset(0)
        while not env.done:
            env.step(4)
        with pytest.raises(RuntimeError):
            env.step(4)

    def test_phrase_length_steps(self):
        env = make_env()
        for p in range(3):
            env.reset(p)
            n = 0
            while not env.done:
                env.step(0)
                n += 1
            assert n == len(env.phrases[p])

    def test_uncovered_groups_rejected(self):
        groups = load_default_groups()[:3]
        with pytest.raises(LookupError):
            SightReadingEnv(load_default_score(), groups, default_params(3, 3), np.random.default_rng(0))

    def test_enforced_product(self):
        env = make_env(seed=2)
        rng = np.random.default_rng(2)
        for ep in range(30):
            env.reset(ep)
            while not env.done:
                rec = env.step(int(rng.integers(env.n_actions)))
                assert rec.errors.product >= rec.bound - 1e-12
