"""Tabular agents: the rate-based learner and the temporal-difference baseline.

The rate learner moves V(s) by zeta * delta and moves action preferences by
sign(delta) * zeta*, where zeta* is the double supremum of the rates solved
for every (state, action) visited in the phrase.  The baseline learns
state values with the discounted Bellman-optimality backup and acts
greedily on them.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .config import LearnerSection, SolverSection
from .pomdp import SightReadingEnv, TransitionRecord
from .rate import (
    MarkovNoise,
    RateSequence,
    UtilityFunction,
    collect_gamma,
    double_supremum,
    solve_rate_sde,
)


@dataclass
class ValueTable:
    values: np.ndarray

    @classmethod
    def zeros(cls, n_states: int) -> "ValueTable":
        return cls(np.zeros(n_states))

    def __getitem__(self, s):
        return self.values[s]

    def __len__(self):
        return len(self.values)

    def _check(self, s):
        if not 0 <= s < len(self.values):
            raise KeyError(f"unknown state {s}")


def softmax_rows(h: np.ndarray) -> np.ndarray:
    z = h - h.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class PolicyTable:
    """Action preferences h(s, a); pi(s, .) is their exponential normalization."""

    preferences: np.ndarray

    @classmethod
    def zeros(cls, n_states: int, n_actions: int) -> "PolicyTable":
        return cls(np.zeros((n_states, n_actions)))

    @property
    def distribution(self) -> np.ndarray:
        return softmax_rows(self.preferences)

    def row(self, s: int) -> np.ndarray:
        return softmax_rows(self.preferences[s])

    def greedy(self, s: int) -> int:
        return int(np.argmax(self.preferences[s]))


def rw_update(V: ValueTable, s: int, zeta: float, delta: float) -> ValueTable:
    """V(s) <- V(s) + zeta * delta.  Updates in place and returns ``V``."""
    V._check(s)
    if not 0.0 <= zeta <= 1.0:
        raise ValueError("zeta must lie in [0, 1]")
    V.values[s] += zeta * delta
    return V


def policy_update(pi: PolicyTable, s: int, a: int, zeta_star: float, delta_sign: float) -> PolicyTable:
    """h(s, a) <- h(s, a) + sign(delta) * zeta*.  In place; returns ``pi``."""
    n_s, n_a = pi.preferences.shape
    if not (0 <= s < n_s and 0 <= a < n_a):
        raise KeyError(f"unknown state-action ({s}, {a})")
    if not 0.0 <= zeta_star <= 1.0:
        raise ValueError("zeta_star must lie in [0, 1]")
    pi.preferences[s, a] += float(np.sign(delta_sign)) * zeta_star
    return pi


def td_value_update(V: ValueTable, s: int, r: float, next_states: Sequence[int],
                    gamma: float = 0.9, alpha: float = 0.1) -> ValueTable:
    """V(s) <- (1 - alpha) V(s) + alpha (r + gamma * max_{s' in next_states} V(s')).

    ``next_states`` are the states reachable from ``s``; an empty sequence
    marks ``s`` terminal and the backup is just ``r``.
    """
    V._check(s)
    for s2 in next_states:
        V._check(s2)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    future = max(V.values[s2] for s2 in next_states) if len(next_states) else 0.0
    V.values[s] = (1.0 - alpha) * V.values[s] + alpha * (r + gamma * future)
    return V


@dataclass(frozen=True)
class DeterministicMDP:
    """State rewards and successor lists; states without successors are terminal."""

    rewards: tuple[float, ...]
    successors: tuple[tuple[int, ...], ...]

    @property
    def n_states(self) -> int:
        return len(self.rewards)

    def options(self) -> dict[int, list[tuple[float, Optional[int]]]]:
        """One-step lookahead table for :func:`greedy_policy`."""
        return {s: [(self.rewards[s2], s2) for s2 in succ] for s, succ in enumerate(self.successors)}


def td_sweep(V: ValueTable, mdp: DeterministicMDP, gamma: float, alpha: float = 1.0) -> float:
    """One in-order sweep of :func:`td_value_update`; returns the largest change."""
    change = 0.0
    for s in range(mdp.n_states):
        old = V.values[s]
        td_value_update(V, s, mdp.rewards[s], mdp.successors[s], gamma, alpha)
        change = max(change, abs(V.values[s] - old))
    return change


def greedy_policy(V: ValueTable, options: Mapping[int, Sequence[tuple[float, Optional[int]]]],
                  gamma: float = 0.9) -> dict[int, int]:
    """Per state, the action maximizing r + gamma * V(successor).

    ``options[s][a]`` is ``(reward, successor)``; a ``None`` successor is
    terminal with value 0.  Ties go to the lowest action index.
    """
    out = {}
    for s, opts in options.items():
        if not opts:
            continue
        scores = [r + gamma * (V.values[s2] if s2 is not None else 0.0) for r, s2 in opts]
        out[s] = int(np.argmax(scores))
    return out


# --- agents ----------------------------------------------------------------


@dataclass
class EpisodeResult:
    episode: int
    phrase_index: int
    records: list[TransitionRecord]
    zeta_selected: float
    gamma: Optional[RateSequence] = None
    zetas: list[float] = field(default_factory=list)

    @property
    def total_reward(self) -> float:
        return float(sum(r.reward for r in self.records))

    def metrics(self) -> dict[str, float]:
        recs = self.records
        return {
            "total_reward": self.total_reward,
            "mean_delta": float(np.mean([r.delta for r in recs])),
            "mean_beta": float(np.mean([r.beta for r in recs])),
            "mean_dc1": float(np.mean([r.errors.d_c1 for r in recs])),
            "mean_dc2": float(np.mean([r.errors.d_c2 for r in recs])),
            "min_product": float(min(r.errors.product for r in recs)),
            "zeta_selected": self.zeta_selected,
        }


class _Agent:
    method = ""

    def __init__(self, n_states: int, n_actions: int, seed: int,
                 learner: LearnerSection | None = None):
        self.cfg = learner or LearnerSection()
        self.n_states = n_states
        self.n_actions = n_actions
        self.seed = seed
        self.rng = np.random.default_rng([seed, 1])
        self.V = ValueTable.zeros(n_states)

    def epsilon(self, episode: int) -> float:
        return self.cfg.epsilon * self.cfg.epsilon_decay ** episode

    def _explore(self, epsilon: float) -> Optional[int]:
        if epsilon > 0 and self.rng.random() < epsilon:
            return int(self.rng.integers(self.n_actions))
        return None


class RateAgent(_Agent):
    method = "rate"

    def __init__(self, n_states: int, n_actions: int, seed: int,
                 learner: LearnerSection | None = None, solver: SolverSection | None = None):
        super().__init__(n_states, n_actions, seed, learner)
        self.solver = solver or SolverSection()
        self.pi = PolicyTable.zeros(n_states, n_actions)
        self.zeta = self.cfg.zeta_bootstrap
        self.utility = UtilityFunction(self.solver.utility, self.solver.slope,
                                       self.solver.scale, self.solver.cap)

    def select(self, s: int, epsilon: float, successors: Sequence[int]) -> int:
        a = self._explore(epsilon)
        return self.pi.greedy(s) if a is None else a

    def solve(self, c1: np.ndarray, episode: int, s: int, a: int, visit: int):
        sv = self.solver
        noise = MarkovNoise(sv.sigma, seed=[self.seed, 2, episode, s, a, visit])
        return solve_rate_sde(c1, self.utility, noise, zeta0=sv.zeta0, dt=sv.dt,
                              zeta_min=sv.zeta_min, zeta_max=sv.zeta_max, context=(s, a))

    def run_episode(self, env: SightReadingEnv, episode: int, phrase_index: int) -> EpisodeResult:
        eps = self.epsilon(episode)
        env.reset(phrase_index)
        records, solutions, visits = [], [], []
        seen = Counter()
        while not env.done:
            s = env.state.observable
            a = self.select(s, eps, env.successors())
            rec = env.step(a)
            rw_update(self.V, s, self.zeta, rec.delta)
            solutions.append(self.solve(env.c1_trajectory, episode, s, a, seen[(s, a)]))
            seen[(s, a)] += 1
            visits.append((s, a, rec.delta))
            records.append(rec)

        gamma = collect_gamma(solutions)
        zeta = double_supremum(gamma)
        per_pair = {ctx: max(vals) for ctx, vals in gamma.by_context().items()}
        for s, a, delta in visits:
            step = zeta if self.cfg.zeta_mode == "scalar" else per_pair[(s, a)]
            policy_update(self.pi, s, a, step, delta)
        self.zeta = zeta
        return EpisodeResult(episode, env.episode.phrase_index, records, zeta, gamma,
                             [sol.terminal for sol in solutions])


class TDAgent(_Agent):
    method = "td"

    def __init__(self, n_states: int, n_actions: int, seed: int, learner: LearnerSection | None = None):
        super().__init__(n_states, n_actions, seed, learner)
        self.visits = np.zeros(n_states, dtype=int)

    def select(self, s: int, epsilon: float, successors: Sequence[int]) -> int:
        a = self._explore(epsilon)
        if a is not None:
            return a
        return int(np.argmax([self.V.values[g] for g in successors]))

    def alpha(self, s: int) -> float:
        if self.cfg.alpha_schedule == "visits":
            return 1.0 / max(self.visits[s], 1)
        return self.cfg.alpha

    def run_episode(self, env: SightReadingEnv, episode: int, phrase_index: int) -> EpisodeResult:
        eps = self.epsilon(episode)
        env.reset(phrase_index)
        records = []
        while not env.done:
            s = env.state.observable
            a = self.select(s, eps, env.successors())
            rec = env.step(a)
            s_next = rec.to_state.observable
            self.visits[s_next] += 1
            td_value_update(self.V, s_next, rec.reward, env.successors(), self.cfg.gamma,
                            self.alpha(s_next))
            records.append(rec)
        return EpisodeResult(episode, env.episode.phrase_index, records, math.nan)


def make_agent(method: str, env: SightReadingEnv, seed: int, learner: LearnerSection | None = None,
               solver: SolverSection | None = None) -> _Agent:
    if method == "rate":
        return RateAgent(env.n_states, env.n_actions, seed, learner, solver)
    if method == "td":
        return TDAgent(env.n_states, env.n_actions, seed, learner)
    raise ValueError(f"unknown method {method!r}")


def run_episode(env: SightReadingEnv, agent: _Agent, episode: int, phrase_index: int | None = None) -> EpisodeResult:
    """Run one phrase; by default phrases are visited round-robin by episode."""
    if phrase_index is None:
        phrase_index = episode % len(env.phrases)
    return agent.run_episode(env, episode, phrase_index)
