"""Plain-text scores: notes, phrases, equal-tempered frequencies and interval groups.

Score text format (UTF-8)::

    # comment line
    tempo=90
    tonic=440
    C4:q E4:q D4:h | D#4:e C4:e E4:q

Each note token is ``PITCHOCTAVE:DUR``.  ``PITCH`` is one of the twelve
sharp-spelled pitch classes, ``OCTAVE`` a single digit and ``DUR`` either a
duration letter (``w h q e s`` = 4, 2, 1, 1/2, 1/4 beats) or a positive
rational number of beats such as ``3/2`` or ``0.75``.  ``|`` separates
phrases.  Header lines must precede the first note token.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from typing import Iterable, Sequence

PITCH_CLASSES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")
PITCH_INDEX = {pc: i for i, pc in enumerate(PITCH_CLASSES)}

DURATION_LETTERS = {
    "w": Fraction(4),
    "h": Fraction(2),
    "q": Fraction(1),
    "e": Fraction(1, 2),
    "s": Fraction(1, 4),
}
_LETTER_FOR_DURATION = {v: k for k, v in DURATION_LETTERS.items()}

A4_FREQUENCY = 440.0
DEFAULT_TEMPO = 60.0

_NOTE_RE = re.compile(r"^([A-Za-z][#b]?)(\d+):(\S+)$")
_TOKEN_RE = re.compile(r"\||[^\s|]+")


class ScoreParseError(ValueError):
    """Raised for malformed score text.  Carries 1-based line/column."""

    def __init__(self, message: str, line: int = 0, column: int = 0, token: str = ""):
        self.line = line
        self.column = column
        self.token = token
        where = f"line {line}, column {column}: " if line else ""
        tok = f" (token {token!r})" if token else ""
        super().__init__(f"{where}{message}{tok}")


def note_frequency(pitch_class: str, octave: int) -> float:
    """Equal-tempered frequency in Hz with A4 = 440 Hz."""
    k = semitone(pitch_class, octave) - semitone("A", 4)
    return A4_FREQUENCY * 2.0 ** (k / 12.0)


def semitone(pitch_class: str, octave: int) -> int:
    """Absolute semitone number (MIDI numbering, C4 = 60)."""
    return 12 * (octave + 1) + PITCH_INDEX[pitch_class]


def from_semitone(n: int) -> tuple[str, int]:
    octave, pc = divmod(n, 12)
    return PITCH_CLASSES[pc], octave - 1


@dataclass(frozen=True)
class Note:
    pitch_class: str
    octave: int
    duration: Fraction
    onset: Fraction = Fraction(0)

    def __post_init__(self):
        if self.pitch_class not in PITCH_INDEX:
            raise ValueError(f"unknown pitch class {self.pitch_class!r}")
        if not 0 <= self.octave <= 9:
            raise ValueError(f"octave {self.octave} outside [0, 9]")
        if self.duration <= 0:
            raise ValueError(f"nonpositive duration {self.duration}")
        if self.onset < 0:
            raise ValueError(f"negative onset {self.onset}")

    @property
    def frequency(self) -> float:
        return note_frequency(self.pitch_class, self.octave)

    @property
    def semitone(self) -> int:
        return semitone(self.pitch_class, self.octave)


@dataclass(frozen=True)
class Phrase:
    notes: tuple[Note, ...]
    index: int = 0

    def __post_init__(self):
        if not self.notes:
            raise ValueError("a phrase needs at least one note")
        onsets = [n.onset for n in self.notes]
        if any(b <= a for a, b in zip(onsets, onsets[1:])):
            raise ValueError("onsets within a phrase must strictly increase")

    def __len__(self) -> int:
        return len(self.notes)

    @property
    def duration(self) -> Fraction:
        last = self.notes[-1]
        return last.onset + last.duration


@dataclass(frozen=True)
class Score:
    phrases: tuple[Phrase, ...]
    tempo: float = DEFAULT_TEMPO
    tonic_frequency: float = A4_FREQUENCY

    def __post_init__(self):
        if not self.phrases:
            raise ValueError("a score needs at least one phrase")
        if self.tempo <= 0:
            raise ValueError("tempo must be positive")
        if self.tonic_frequency <= 0:
            raise ValueError("tonic frequency must be positive")

    @property
    def notes(self) -> list[Note]:
        return [n for p in self.phrases for n in p.notes]

    @property
    def has_explicit_phrases(self) -> bool:
        return len(self.phrases) > 1

    def seconds_per_beat(self) -> float:
        return 60.0 / self.tempo


def _parse_duration(text: str) -> Fraction:
    if text in DURATION_LETTERS:
        return DURATION_LETTERS[text]
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"bad duration {text!r}") from None


def _build_phrase(items: list[tuple[str, int, Fraction]], index: int) -> Phrase:
    notes = []
    onset = Fraction(0)
    for pc, octave, dur in items:
        notes.append(Note(pc, octave, dur, onset))
        onset += dur
    return Phrase(tuple(notes), index)


def parse_score(text: str) -> Score:
    """Parse score text into a :class:`Score`."""
    tempo = DEFAULT_TEMPO
    tonic = A4_FREQUENCY
    phrases: list[list[tuple[str, int, Fraction]]] = [[]]
    seen_note = False

    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" in stripped and not seen_note:
            key, _, value = stripped.partition("=")
            key = key.strip().lower()
            column = line.index(stripped) + 1
            if key not in ("tempo", "tonic"):
                raise ScoreParseError("unknown header", lineno, column, stripped)
            try:
                number = float(value)
            except ValueError:
                raise ScoreParseError(f"bad {key} value", lineno, column, stripped) from None
            if not number > 0:
                raise ScoreParseError(f"{key} must be positive", lineno, column, stripped)
            if key == "tempo":
                tempo = number
            else:
                tonic = number
            continue

        for m in _TOKEN_RE.finditer(line):
            token = m.group(0)
            column = m.start() + 1
            if token == "|":
                phrases.append([])
                continue
            nm = _NOTE_RE.match(token)
            if nm is None:
                raise ScoreParseError("malformed note token", lineno, column, token)
            pc, octave_text, dur_text = nm.groups()
            pc = pc[0].upper() + pc[1:]
            if pc not in PITCH_INDEX:
                raise ScoreParseError("unknown pitch class", lineno, column, token)
            octave = int(octave_text)
            if octave > 9:
                raise ScoreParseError("octave outside [0, 9]", lineno, column, token)
            try:
                dur = _parse_duration(dur_text)
            except ValueError:
                raise ScoreParseError("malformed duration", lineno, column, token) from None
            if dur <= 0:
                raise ScoreParseError("nonpositive duration", lineno, column, token)
            phrases[-1].append((pc, octave, dur))
            seen_note = True

    if not seen_note:
        raise ScoreParseError("empty score: no note tokens")
    built = [items for items in phrases if items]
    return Score(
        tuple(_build_phrase(items, i) for i, items in enumerate(built)),
        tempo=tempo,
        tonic_frequency=tonic,
    )


def format_duration(d: Fraction) -> str:
    return _LETTER_FOR_DURATION.get(d, str(d))


def format_score(score: Score) -> str:
    """Canonical text for ``score``; ``parse_score(format_score(s)) == s``."""
    lines = [f"tempo={score.tempo!r}", f"tonic={score.tonic_frequency!r}"]
    body = " | ".join(
        " ".join(f"{n.pitch_class}{n.octave}:{format_duration(n.duration)}" for n in p.notes)
        for p in score.phrases
    )
    lines.append(body)
    return "\n".join(lines) + "\n"


def segment_phrases(score: Score, window: int) -> list[Phrase]:
    """Chunk the note stream into phrases of ``window`` notes.

    Explicit separators in the score take precedence and are returned as is.
    Onsets restart at zero in every chunk.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    if score.has_explicit_phrases:
        return list(score.phrases)
    notes = score.notes
    out = []
    for i in range(0, len(notes), window):
        chunk = [(n.pitch_class, n.octave, n.duration) for n in notes[i : i + window]]
        out.append(_build_phrase(chunk, len(out)))
    return out


def load_default_score() -> Score:
    text = resources.files("sightreading.data").joinpath("default_score.txt").read_text("utf-8")
    return parse_score(text)


# --- interval groups -------------------------------------------------------


def pair_key(a: str, b: str) -> tuple[str, str]:
    """Order-insensitive key for a pitch-class pair."""
    for pc in (a, b):
        if pc not in PITCH_INDEX:
            raise ValueError(f"unknown pitch class {pc!r}")
    return (a, b) if PITCH_INDEX[a] <= PITCH_INDEX[b] else (b, a)


ALL_PAIRS = tuple(pair_key(a, b) for a, b in itertools.combinations_with_replacement(PITCH_CLASSES, 2))


@dataclass(frozen=True)
class IntervalGroup:
    label: str
    members: frozenset = field(default_factory=frozenset)

    def __contains__(self, pair) -> bool:
        return pair_key(*pair) in self.members


def make_group(label: str, pairs: Iterable[Sequence[str]]) -> IntervalGroup:
    return IntervalGroup(label, frozenset(pair_key(a, b) for a, b in pairs))


def check_partition(groups: Sequence[IntervalGroup]) -> None:
    seen: dict[tuple[str, str], str] = {}
    labels = set()
    for g in groups:
        if g.label in labels:
            raise ValueError(f"duplicate group label {g.label!r}")
        labels.add(g.label)
        for pair in g.members:
            if pair in seen:
                raise ValueError(f"pair {pair[0]}-{pair[1]} in both {seen[pair]!r} and {g.label!r}")
            seen[pair] = g.label


def interval_group_of(pair: Sequence[str], groups: Sequence[IntervalGroup]) -> IntervalGroup:
    key = pair_key(*pair)
    for g in groups:
        if key in g.members:
            return g
    raise LookupError(f"pair {key[0]}-{key[1]} is not covered by any interval group")


def parse_groups(text: str) -> list[IntervalGroup]:
    """Parse ``label = X-Y, X-Y, ...`` lines into a validated partition."""
    groups = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        label, sep, rhs = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected 'label = pairs'")
        pairs = []
        for item in rhs.split(","):
            a, dash, b = item.strip().partition("-")
            if not dash:
                raise ValueError(f"line {lineno}: bad pair {item.strip()!r}")
            pairs.append((a.strip(), b.strip()))
        groups.append(make_group(label.strip(), pairs))
    if not groups:
        raise ValueError("no interval groups configured")
    check_partition(groups)
    return groups


def load_default_groups() -> list[IntervalGroup]:
    text = resources.files("sightreading.data").joinpath("interval_groups.cfg").read_text("utf-8")
    return parse_groups(text)
