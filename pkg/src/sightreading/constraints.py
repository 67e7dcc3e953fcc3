"""Rhythm and pitch constraints and the error-product coupling between them.

The rhythm feature is a weighted, frequency-scaled difference of cube-root
STFT magnitudes of an onset impulse train.  The pitch feature is the absolute
deviation of the produced frequency from the target, normalized by the tonic.
The two error terms are coupled by a lower bound on their product.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

TONIC_HZ = 440.0


@dataclass(frozen=True)
class SpectralFrame:
    magnitudes: np.ndarray
    bin_frequencies: np.ndarray
    block_count: int

    def __post_init__(self):
        n = self.block_count
        if n <= 0 or n % 2:
            raise ValueError("block_count must be an even positive integer")
        if len(self.magnitudes) != n // 2 + 1 or len(self.bin_frequencies) != n // 2 + 1:
            raise ValueError("frame arrays must have block_count/2 + 1 entries")
        if np.any(self.magnitudes < 0):
            raise ValueError("magnitudes must be nonnegative")
        if np.any(np.diff(self.bin_frequencies) < 0):
            raise ValueError("bin frequencies must be nondecreasing")


@dataclass(frozen=True)
class ConstraintValues:
    c1: float
    c2: float
    produced_frequency: float


@dataclass(frozen=True)
class ErrorPair:
    d_c1: float
    d_c2: float

    def __post_init__(self):
        if self.d_c1 < 0 or self.d_c2 < 0:
            raise ValueError("errors must be nonnegative")

    @property
    def product(self) -> float:
        return self.d_c1 * self.d_c2


@dataclass(frozen=True)
class UncertaintyParams:
    delta: float
    M: float

    def __post_init__(self):
        if self.M <= 0:
            raise ValueError("M must be positive")
        if self.delta < 0:
            raise ValueError("delta is a magnitude and must be nonnegative")

    @property
    def bound(self) -> float:
        return self.delta * self.M


def rasterize(times: Sequence[float], amplitudes: Sequence[float], sample_rate: float,
              min_length: int = 0) -> np.ndarray:
    """Place impulses on the sample grid (nearest sample, summed on collision)."""
    idx = np.rint(np.asarray(times, dtype=float) * sample_rate).astype(int)
    if np.any(idx < 0):
        raise ValueError("impulse times must be nonnegative")
    length = max(int(idx.max()) + 1, min_length)
    x = np.zeros(length)
    np.add.at(x, idx, np.asarray(amplitudes, dtype=float))
    return x


def frame_signal(x: np.ndarray, window_len: int, hop: int) -> np.ndarray:
    """Split ``x`` into rectangular frames, zero-padding the tail."""
    n_frames = 1 + max(0, math.ceil((len(x) - window_len) / hop))
    padded = np.zeros((n_frames - 1) * hop + window_len)
    padded[: len(x)] = x
    starts = np.arange(n_frames) * hop
    return padded[starts[:, None] + np.arange(window_len)]


def stft_magnitudes(times: Sequence[float], amplitudes: Sequence[float], window_len: int,
                    hop: int, sample_rate: float, min_length: int = 0) -> list[SpectralFrame]:
    """Magnitude spectra of a rasterized onset impulse train, one per frame.

    ``min_length`` pads the rasterized signal (in samples) so trains with the
    same span produce the same frame count.
    """
    if len(times) == 0:
        raise ValueError("empty impulse train")
    if len(times) != len(amplitudes):
        raise ValueError("times and amplitudes differ in length")
    if window_len < 2 or window_len & (window_len - 1):
        raise ValueError("window_len must be a power of two >= 2")
    if hop < 1:
        raise ValueError("hop must be >= 1")
    if np.any(np.diff(times) < 0):
        raise ValueError("impulse train must be sorted by time")
    if hop > window_len:
        warnings.warn("hop exceeds window_len; samples between frames are skipped", stacklevel=2)

    x = rasterize(times, amplitudes, sample_rate, min_length)
    frames = frame_signal(x, window_len, hop)
    mags = np.abs(np.fft.rfft(frames, axis=1))
    freqs = np.arange(window_len // 2 + 1) * sample_rate / window_len
    return [SpectralFrame(m, freqs, window_len) for m in mags]


def rhythm_c1(frame_t: SpectralFrame, frame_prev: SpectralFrame, weights=None) -> float:
    """sum_k W_k f(k) (cbrt(a_k^t) - cbrt(a_k^{t-1}))."""
    if frame_t.block_count != frame_prev.block_count or not np.array_equal(
        frame_t.bin_frequencies, frame_prev.bin_frequencies
    ):
        raise ValueError("frames must share block count and bin frequencies")
    n_bins = len(frame_t.magnitudes)
    w = np.ones(n_bins) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (n_bins,):
        raise ValueError(f"weights must have {n_bins} entries")
    diff = np.cbrt(frame_t.magnitudes) - np.cbrt(frame_prev.magnitudes)
    return float(np.sum(w * frame_t.bin_frequencies * diff))


def c1_trajectory(frames: Sequence[SpectralFrame], weights=None) -> np.ndarray:
    """c1 per frame; the frame before the first is taken as silence."""
    silence = SpectralFrame(np.zeros_like(frames[0].magnitudes), frames[0].bin_frequencies,
                            frames[0].block_count)
    prev = [silence] + list(frames[:-1])
    return np.array([rhythm_c1(f, p, weights) for f, p in zip(frames, prev)])


def pitch_c2(produced: float, target: float, reference: float = TONIC_HZ) -> float:
    """Tonic-normalized absolute pitch deviation |g - target| / reference."""
    if produced <= 0 or target <= 0 or reference <= 0:
        raise ValueError("frequencies must be positive")
    return abs(produced - target) / reference


def pitch_satisfied(c2: float, threshold: float) -> bool:
    return c2 <= threshold


def enforce_uncertainty(raw: ErrorPair, params: UncertaintyParams) -> ErrorPair:
    """Inflate the smaller error so that d_c1 * d_c2 >= delta * M.

    Ties inflate d_c2.  If both errors are zero, both become sqrt(delta * M).
    Errors are never reduced.
    """
    bound = params.bound
    if bound <= 0 or raw.d_c1 * raw.d_c2 >= bound:
        return raw
    if raw.d_c1 == 0 and raw.d_c2 == 0:
        r = math.sqrt(bound)
        return ErrorPair(r, r)
    if raw.d_c1 < raw.d_c2:
        return ErrorPair(bound / raw.d_c2, raw.d_c2)
    return ErrorPair(raw.d_c1, bound / raw.d_c1)


def raw_tradeoff(attention: float, k1: float = 1.0, k2: float = 1.0, floor: float = 0.01) -> ErrorPair:
    """Error pair before coupling; ``attention`` is the share spent on rhythm."""
    if not 0.0 <= attention <= 1.0:
        raise ValueError("attention must lie in [0, 1]")
    if k1 <= 0 or k2 <= 0 or floor <= 0:
        raise ValueError("k1, k2 and floor must be positive")
    return ErrorPair(k1 * (1.0 - attention) + floor, k2 * attention + floor)


def tradeoff_errors(attention: float, params: UncertaintyParams, k1: float = 1.0,
                    k2: float = 1.0, floor: float = 0.01) -> ErrorPair:
    return enforce_uncertainty(raw_tradeoff(attention, k1, k2, floor), params)


def tradeoff_curve(params: UncertaintyParams, resolution: int = 101, k1: float = 1.0,
                   k2: float = 1.0, floor: float = 0.01) -> list[tuple[float, ErrorPair]]:
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    lams = np.linspace(0.0, 1.0, resolution)
    return [(float(lam), tradeoff_errors(float(lam), params, k1, k2, floor)) for lam in lams]
