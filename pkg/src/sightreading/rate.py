"""Policy learning-rate equation, the solution sequence and its double supremum.

The rate obeys dz = -d/dt U(c1(t)) dt + dm(t), with m a bounded-increment
Markov noise.  It is integrated with an explicit first-order scheme on the
c1 sample grid and clamped to [zeta_min, zeta_max].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class UtilityFunction:
    """Nondecreasing utility of the rhythm feature.

    ``linear``: U(x) = slope * x.
    ``log-saturating``: logistic U(x) = cap / (1 + exp(-x / scale)), bounded by cap.
    """

    kind: str = "log-saturating"
    slope: float = 1.0
    scale: float = 1.0
    cap: float = 0.5

    def __post_init__(self):
        if self.kind not in ("linear", "log-saturating"):
            raise ValueError(f"unknown utility kind {self.kind!r}")
        if self.kind == "linear" and self.slope < 0:
            raise ValueError("linear utility needs slope >= 0")
        if self.kind == "log-saturating" and (self.scale <= 0 or self.cap <= 0):
            raise ValueError("log-saturating utility needs scale > 0 and cap > 0")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "linear":
            return self.slope * x
        return self.cap * _expit(x / self.scale)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "linear":
            return np.full_like(x, self.slope)
        s = _expit(x / self.scale)
        return self.cap * s * (1.0 - s) / self.scale


def _expit(z):
    # numerically stable logistic
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class MarkovNoise:
    """I.i.d. uniform increments on [-sigma, sigma]; their partial sums form m(t)."""

    sigma: float = 0.01
    seed: int | Sequence[int] = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    def increments(self, n: int) -> np.ndarray:
        if self.sigma == 0:
            return np.zeros(n)
        rng = np.random.default_rng(self.seed)
        return rng.uniform(-self.sigma, self.sigma, size=n)


@dataclass(frozen=True)
class RateSolution:
    values: np.ndarray
    dt: float
    context: Hashable = None

    def __post_init__(self):
        if len(self.values) < 2:
            raise ValueError("a rate solution needs at least two grid points")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def terminal(self) -> float:
        return float(self.values[-1])

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.values)) * self.dt


def solve_rate_sde(c1_trajectory, utility: UtilityFunction, noise: MarkovNoise,
                   zeta0: float = 0.5, dt: float = 0.01, steps: int | None = None,
                   zeta_min: float = 0.0, zeta_max: float = 1.0,
                   context: Hashable = None) -> RateSolution:
    """Integrate the rate equation over the sampled c1 trajectory.

    The drift uses the chain rule U'(c1_n) * (c1_{n+1} - c1_n) / dt, a left-point
    first-order estimate of d/dt U(c1(t)); for linear U this equals the exact
    difference quotient.
    """
    c1 = np.asarray(c1_trajectory, dtype=float)
    if dt <= 0:
        raise ValueError("dt must be positive")
    if steps is None:
        steps = len(c1) - 1
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if len(c1) < steps + 1:
        raise ValueError(f"c1 trajectory has {len(c1)} samples, need {steps + 1}")
    if zeta_min > zeta_max:
        raise ValueError("zeta_min exceeds zeta_max")

    slope = utility.derivative(c1[:steps]) * np.diff(c1[: steps + 1]) / dt
    dm = noise.increments(steps)
    z = np.empty(steps + 1)
    z[0] = min(max(zeta0, zeta_min), zeta_max)
    for n in range(steps):
        z[n + 1] = min(max(z[n] - slope[n] * dt + dm[n], zeta_min), zeta_max)
    return RateSolution(z, dt, context)


@dataclass(frozen=True)
class RateSequence:
    """Multiset of terminal rates tagged by their (state, action) context."""

    entries: tuple[tuple[Hashable, float], ...] = field(default_factory=tuple)

    @property
    def values(self) -> list[float]:
        return [v for _, v in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def by_context(self) -> dict:
        out: dict = {}
        for ctx, v in self.entries:
            out.setdefault(ctx, []).append(v)
        return out

    def limits(self) -> tuple[float, float]:
        """(lower, upper) limits of the sequence, reported as summary only."""
        vals = self.values
        return min(vals), max(vals)


def collect_gamma(solutions: Iterable[RateSolution]) -> RateSequence:
    items = [(s.context, s.terminal) for s in solutions]
    if not items:
        raise ValueError("no rate solutions to collect")
    items.sort(key=lambda cv: (-cv[1], repr(cv[0])))
    return RateSequence(tuple(items))


def double_supremum(gamma: RateSequence) -> float:
    """sup over states of sup over actions of the terminal rates.

    Contexts are ``(state, action)`` tuples; anything else is treated as its
    own state with a single action.
    """
    if len(gamma) == 0:
        raise ValueError("empty rate sequence: no solved rates this phrase")
    per_state: dict = {}
    for ctx, v in gamma.entries:
        state = ctx[0] if isinstance(ctx, tuple) and len(ctx) == 2 else ctx
        per_state[state] = max(per_state.get(state, -math.inf), v)
    return max(per_state.values())
