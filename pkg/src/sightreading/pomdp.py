"""Partially observable sight-reading process.

Observable states are interval groups; a finite hidden chain (the
perceptual component) emits them.  An episode is one pass over one phrase:
at each step the agent reads the next score note and plays a neighbour of
the note it is currently on.  The step reports the reward, the group-change
flag, the transition weight beta and the weighted prediction error delta.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .config import ConstraintSection, EnvSection
from .constraints import (
    ErrorPair,
    UncertaintyParams,
    c1_trajectory,
    enforce_uncertainty,
    pitch_c2,
    stft_magnitudes,
)
from .score import (
    PITCH_CLASSES,
    IntervalGroup,
    Note,
    Score,
    from_semitone,
    interval_group_of,
    pair_key,
    segment_phrases,
)

PROB_TOL = 1e-9


@dataclass(frozen=True)
class CompositeState:
    observable: int
    hidden: int


@dataclass(frozen=True)
class ParamSet:
    """Emission Pr(s0 | s_h), hidden prior Pr(s_h) and hidden transition matrix."""

    emission: np.ndarray
    hidden_prior: np.ndarray
    hidden_transition: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.emission, dtype=float)
        p = np.asarray(self.hidden_prior, dtype=float)
        t = np.asarray(self.hidden_transition, dtype=float)
        object.__setattr__(self, "emission", e)
        object.__setattr__(self, "hidden_prior", p)
        object.__setattr__(self, "hidden_transition", t)
        h = len(p)
        if p.ndim != 1 or h == 0:
            raise ValueError("hidden_prior must be a non-empty vector")
        if e.ndim != 2 or e.shape[0] != h:
            raise ValueError(f"emission must have {h} rows")
        if t.shape != (h, h):
            raise ValueError(f"hidden_transition must be {h}x{h}")
        for name, arr in (("emission", e), ("hidden_prior", p), ("hidden_transition", t)):
            if np.any(arr < 0):
                raise ValueError(f"{name} has negative entries")
            sums = arr.sum(axis=-1)
            if np.any(np.abs(sums - 1.0) > PROB_TOL):
                raise ValueError(f"{name} rows must sum to 1")

    @property
    def n_hidden(self) -> int:
        return len(self.hidden_prior)

    @property
    def n_observable(self) -> int:
        return self.emission.shape[1]


def default_params(n_hidden: int, n_groups: int, stay: float = 0.8, noise: float = 0.3) -> ParamSet:
    """Uniform prior, sticky hidden chain, noisy-identity emission.

    Hidden state i emits group i (mod n_groups) with weight 1 - noise; the
    noise mass is spread uniformly over all groups.
    """
    prior = np.full(n_hidden, 1.0 / n_hidden)
    if n_hidden == 1:
        trans = np.ones((1, 1))
    else:
        trans = np.full((n_hidden, n_hidden), (1.0 - stay) / (n_hidden - 1))
        np.fill_diagonal(trans, stay)
    emission = np.full((n_hidden, n_groups), noise / n_groups)
    emission[np.arange(n_hidden), np.arange(n_hidden) % n_groups] += 1.0 - noise
    return ParamSet(emission, prior, trans)


def state_likelihood(s: CompositeState, eta: ParamSet) -> float:
    """Pr(s0 | s_h, eta) * Pr(s_h | eta)."""
    if not 0 <= s.hidden < eta.n_hidden or not 0 <= s.observable < eta.n_observable:
        raise IndexError(f"state {s} outside the configured alphabets")
    return float(eta.emission[s.hidden, s.observable] * eta.hidden_prior[s.hidden])


def marginal_action_prob(action_likelihoods: Sequence[float], prior: Sequence[float]) -> float:
    """Pr(E) = sum_i Pr(E | s_h_i) Pr(s_h_i)."""
    lik = np.asarray(action_likelihoods, dtype=float)
    pri = np.asarray(prior, dtype=float)
    if lik.shape != pri.shape:
        raise ValueError("likelihood and prior lengths differ")
    if np.any(lik < 0) or np.any(lik > 1):
        raise ValueError("likelihoods must lie in [0, 1]")
    if np.any(pri < 0) or abs(pri.sum() - 1.0) > PROB_TOL:
        raise ValueError("prior must be a distribution")
    return float(min(max(lik @ pri, 0.0), 1.0))


def transition_weight(s: int, history: Sequence[Optional[int]], eta: ParamSet) -> float:
    """beta = P(s_t = s, phi_t = 1 | hidden history up to t + 1).

    ``history`` lists hidden states for times 1..t+1; ``None`` marks a time
    whose hidden state was not revealed.  A single-entry history leaves
    time t+1 unobserved.  The observable at each time is emitted from that
    time's hidden state, and phi_t = 1 iff the observables at t and t+1
    differ.  Exact forward filtering over the hidden alphabet.
    """
    if not 0 <= s < eta.n_observable:
        raise IndexError(f"observable state {s} out of range")
    if len(history) == 0:
        raise ValueError("history must be non-empty")
    hist = list(history) + ([None] if len(history) == 1 else [])
    for h in hist:
        if h is not None and not 0 <= h < eta.n_hidden:
            raise IndexError(f"hidden state {h} out of range")

    def mask(h):
        if h is None:
            return np.ones(eta.n_hidden)
        m = np.zeros(eta.n_hidden)
        m[h] = 1.0
        return m

    T = eta.hidden_transition
    alpha = eta.hidden_prior * mask(hist[0])
    for h in hist[1:-1]:
        z = alpha.sum()
        if z == 0:
            raise ValueError("history has zero probability under eta")
        alpha = (alpha / z) @ T * mask(h)
    pair = alpha[:, None] * T * mask(hist[-1])[None, :]
    z = pair.sum()
    if z == 0:
        raise ValueError("history has zero probability under eta")
    e = eta.emission[:, s]
    beta = float(e @ (pair / z) @ (1.0 - e))
    return min(max(beta, 0.0), 1.0)


@dataclass
class RewardBaseline:
    """Running mean of observed rewards; starts at 0."""

    rho: float = 0.0
    count: int = 0

    def update(self, reward: float) -> None:
        self.count += 1
        self.rho += (reward - self.rho) / self.count


def weighted_prediction_error(beta: float, r_next: float, baseline: RewardBaseline) -> float:
    """delta = beta * (r_next - rho); the baseline then absorbs r_next."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    delta = beta * (r_next - baseline.rho)
    baseline.update(r_next)
    return delta


def reward_from_errors(errors: ErrorPair, correct: bool, w1: float = 0.5, w2: float = 0.5,
                       bonus: float = 0.5) -> float:
    penalty = min(max(w1 * errors.d_c1 + w2 * errors.d_c2, 0.0), 2.0)
    r = 1.0 - penalty / 2.0 + (bonus if correct else 0.0)
    return min(max(r, -1.0), 1.0)


@dataclass(frozen=True)
class TransitionRecord:
    from_state: CompositeState
    action: int
    to_state: CompositeState
    reward: float
    flag: int
    correct: bool
    produced_frequency: float
    raw_errors: ErrorPair
    errors: ErrorPair
    bound: float
    beta: float
    delta: float
    position: int


def _semitone_frequency(n: int) -> float:
    return 440.0 * 2.0 ** ((n - 69) / 12.0)


@dataclass
class _Episode:
    phrase_index: int
    position: int
    notes: tuple[Note, ...]
    current: Note
    observable: int
    hidden_history: list
    c1_agent: np.ndarray
    c1_ref: np.ndarray
    note_frames: list
    done: bool = False
    records: list = field(default_factory=list)


class SightReadingEnv:
    """Single-threaded environment; owns its RNG stream and history."""

    def __init__(self, score: Score, groups: Sequence[IntervalGroup], eta: ParamSet,
                 rng: np.random.Generator, window: int = 4,
                 env_cfg: EnvSection | None = None,
                 constraint_cfg: ConstraintSection | None = None):
        self.score = score
        self.groups = list(groups)
        self.eta = eta
        self.rng = rng
        self.cfg = env_cfg or EnvSection()
        self.ccfg = constraint_cfg or ConstraintSection()
        self.phrases = segment_phrases(score, window)
        if eta.n_observable != len(self.groups):
            raise ValueError(f"emission has {eta.n_observable} columns for {len(self.groups)} groups")
        self.n_actions = 2 * self.cfg.radius + 1
        self._flat = [n for p in self.phrases for n in p.notes]
        self._starts = list(itertools.accumulate([0] + [len(p) for p in self.phrases]))
        self._group_index = {}
        for i, g in enumerate(self.groups):
            for pair in g.members:
                self._group_index[pair] = i
        self._check_coverage()
        self.baseline = RewardBaseline()
        self._recent_delta = deque(maxlen=self.ccfg.delta_window)
        self.episode: _Episode | None = None

    @property
    def n_states(self) -> int:
        return len(self.groups)

    @property
    def n_hidden(self) -> int:
        return self.eta.n_hidden

    def _check_coverage(self):
        missing = set()
        for note in self._flat:
            for off in range(-self.cfg.radius, self.cfg.radius + 1):
                pc = PITCH_CLASSES[(note.semitone + off) % 12]
                if pair_key(note.pitch_class, pc) not in self._group_index:
                    missing.add(pair_key(note.pitch_class, pc))
        if missing:
            shown = ", ".join(f"{a}-{b}" for a, b in sorted(missing))
            raise LookupError(f"interval groups do not cover reachable pairs: {shown}")

    def group_of(self, a: str, b: str) -> int:
        return self._group_index[pair_key(a, b)]

    def group_label(self, i: int) -> str:
        return self.groups[i].label

    def _lead_in(self, phrase_index: int) -> tuple[Note, Note]:
        """The two score notes preceding the phrase, cyclically."""
        g = self._starts[phrase_index]
        n = len(self._flat)
        return self._flat[(g - 2) % n], self._flat[(g - 1) % n]

    def target_note(self, current: Note, action: int) -> tuple[str, int, int]:
        if not 0 <= action < self.n_actions:
            raise ValueError(f"action {action} outside the neighbour set 0..{self.n_actions - 1}")
        semi = current.semitone + action - self.cfg.radius
        pc, octave = from_semitone(semi)
        return pc, octave, semi

    def correct_action(self) -> int | None:
        """Action index that plays the next score note, if within radius."""
        ep = self.episode
        off = ep.notes[ep.position].semitone - ep.current.semitone
        return off + self.cfg.radius if abs(off) <= self.cfg.radius else None

    def successors(self) -> list[int]:
        """Observable group reached by each action at the current position."""
        ep = self.episode
        if ep is None or ep.done:
            return []
        out = []
        for a in range(self.n_actions):
            pc, _, _ = self.target_note(ep.current, a)
            out.append(self.group_of(ep.current.pitch_class, pc))
        return out

    def _rhythm(self, notes: Sequence[Note]):
        spb = self.score.seconds_per_beat()
        c = self.ccfg
        lead = self.cfg.lead_in
        ref = np.array([lead + float(n.onset) * spb for n in notes])
        jitter_sd = self.cfg.timing_noise * (1.0 - self.cfg.attention)
        jitter = self.rng.normal(0.0, 1.0, size=len(notes)) * jitter_sd
        agent = np.sort(np.maximum(ref + jitter, 0.0))
        end = lead + float(notes[-1].onset + notes[-1].duration) * spb
        min_len = int(np.ceil((end + 2 * lead) * c.sample_rate)) + c.window_len
        amps = np.ones(len(notes))
        f_ref = stft_magnitudes(ref, amps, c.window_len, c.hop, c.sample_rate, min_len)
        f_agent = stft_magnitudes(agent, amps, c.window_len, c.hop, c.sample_rate, min_len)
        c1_ref = c1_trajectory(f_ref, c.weights)
        c1_agent = c1_trajectory(f_agent, c.weights)
        frames = [min(int(round(t * c.sample_rate)) // c.hop, len(c1_ref) - 1) for t in ref]
        return c1_agent, c1_ref, frames

    def reset(self, phrase_index: int) -> CompositeState:
        phrase = self.phrases[phrase_index % len(self.phrases)]
        before, current = self._lead_in(phrase_index % len(self.phrases))
        hidden0 = self._sample(self.eta.hidden_prior)
        c1_agent, c1_ref, frames = self._rhythm(phrase.notes)
        self.episode = _Episode(
            phrase_index=phrase.index,
            position=0,
            notes=phrase.notes,
            current=current,
            observable=self.group_of(before.pitch_class, current.pitch_class),
            hidden_history=[hidden0],
            c1_agent=c1_agent,
            c1_ref=c1_ref,
            note_frames=frames,
        )
        return self.state

    @property
    def state(self) -> CompositeState:
        ep = self.episode
        return CompositeState(ep.observable, ep.hidden_history[-1])

    @property
    def done(self) -> bool:
        return self.episode is None or self.episode.done

    @property
    def c1_trajectory(self) -> np.ndarray:
        return self.episode.c1_agent

    def _sample(self, p: np.ndarray) -> int:
        u = self.rng.random()
        return int(min(np.searchsorted(np.cumsum(p), u, side="right"), len(p) - 1))

    def uncertainty_delta(self) -> float:
        return float(np.mean(self._recent_delta)) if self._recent_delta else 0.0

    def step(self, action: int) -> TransitionRecord:
        ep = self.episode
        if ep is None or ep.done:
            raise RuntimeError("episode finished; call reset()")
        cfg = self.cfg
        pc, _, semi = self.target_note(ep.current, action)
        next_note = ep.notes[ep.position]
        correct = semi == next_note.semitone

        f_target = _semitone_frequency(semi)
        noise = self.rng.normal(0.0, 1.0) * cfg.pitch_noise * cfg.attention * f_target
        produced = max(abs(f_target + noise), 1e-9)
        d_c2 = pitch_c2(produced, next_note.frequency, self.score.tonic_frequency)
        k = ep.note_frames[ep.position]
        d_c1 = abs(float(ep.c1_agent[k] - ep.c1_ref[k]))
        raw = ErrorPair(d_c1, d_c2)
        params = UncertaintyParams(self.uncertainty_delta(), self.ccfg.M)
        errors = enforce_uncertainty(raw, params)
        reward = reward_from_errors(errors, correct, cfg.reward_w1, cfg.reward_w2, cfg.reward_bonus)

        from_state = self.state
        new_obs = self.group_of(ep.current.pitch_class, pc)
        flag = int(new_obs != ep.observable)
        hidden_next = self._sample(self.eta.hidden_transition[from_state.hidden])
        ep.hidden_history.append(hidden_next)
        beta = transition_weight(from_state.observable, ep.hidden_history, self.eta)
        delta = weighted_prediction_error(beta, reward, self.baseline)
        self._recent_delta.append(abs(delta))

        ep.observable = new_obs
        ep.current = next_note
        rec = TransitionRecord(
            from_state=from_state,
            action=action,
            to_state=CompositeState(new_obs, hidden_next),
            reward=reward,
            flag=flag,
            correct=correct,
            produced_frequency=produced,
            raw_errors=raw,
            errors=errors,
            bound=params.bound,
            beta=beta,
            delta=delta,
            position=ep.position,
        )
        ep.position += 1
        ep.done = ep.position >= len(ep.notes)
        ep.records.append(rec)
        return rec
