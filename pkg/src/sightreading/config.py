"""Experiment configuration: flat ``section.key = value`` text files.

Values are Python/JSON literals where they parse as such (numbers, lists,
matrices as nested bracketed lists) and bare strings otherwise.  ``none``
or an empty value means "use the built-in default".  Lines starting with
``#`` are comments.  Keys in the ``manifest`` section are metadata and are
ignored on load, so a run manifest is itself a loadable config.
"""

from __future__ import annotations

import ast
import dataclasses
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


@dataclass
class ExperimentSection:
    score_path: str = ""
    groups_path: str = ""
    method: str = "rate"
    episodes: int = 500
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    output_dir: str = "out"
    workers: int = 1


@dataclass
class ScoreSection:
    window: int = 4


@dataclass
class EnvSection:
    hidden_states: int = 3
    hidden_stay: float = 0.8
    emission_noise: float = 0.3
    hidden_prior: list | None = None
    hidden_transition: list | None = None
    emission: list | None = None
    radius: int = 4
    reward_w1: float = 0.5
    reward_w2: float = 0.5
    reward_bonus: float = 0.5
    attention: float = 0.5
    pitch_noise: float = 0.01
    timing_noise: float = 0.005
    lead_in: float = 0.25


@dataclass
class ConstraintSection:
    sample_rate: float = 16.0
    window_len: int = 16
    hop: int = 4
    weights: list | None = None
    M: float = 0.1
    delta_window: int = 1
    pitch_threshold: float = 0.02
    tradeoff_delta: float = 0.5
    k1: float = 1.0
    k2: float = 1.0
    floor: float = 0.01
    resolution: int = 101


@dataclass
class SolverSection:
    dt: float = 0.01
    sigma: float = 0.01
    zeta0: float = 0.5
    zeta_min: float = 0.0
    zeta_max: float = 1.0
    utility: str = "log-saturating"
    slope: float = 1.0
    scale: float = 1.0
    cap: float = 0.5


@dataclass
class LearnerSection:
    gamma: float = 0.9
    alpha: float = 0.1
    alpha_schedule: str = "constant"
    epsilon: float = 0.1
    epsilon_decay: float = 0.995
    zeta_mode: str = "scalar"
    zeta_bootstrap: float = 0.5


@dataclass
class CompareSection:
    threshold: float = 3.95
    smoothing: int = 10
    final_window: int = 100


@dataclass
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    score: ScoreSection = field(default_factory=ScoreSection)
    env: EnvSection = field(default_factory=EnvSection)
    constraints: ConstraintSection = field(default_factory=ConstraintSection)
    solver: SolverSection = field(default_factory=SolverSection)
    learner: LearnerSection = field(default_factory=LearnerSection)
    compare: CompareSection = field(default_factory=CompareSection)

    def section_names(self) -> list[str]:
        return [f.name for f in dataclasses.fields(self)]


def _field_types(section) -> dict[str, object]:
    hints = typing.get_type_hints(type(section))
    return {f.name: hints[f.name] for f in dataclasses.fields(section)}


def _parse_value(text: str):
    text = text.strip()
    if text == "" or text.lower() == "none":
        return None
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def _coerce(key: str, value, typ):
    optional = typing.get_origin(typ) in (typing.Union, types.UnionType)
    base = [t for t in typing.get_args(typ) if t is not type(None)][0] if optional else typ
    if value is None:
        if optional:
            return None
        if base is str:
            return ""
        raise ConfigError(key, "a value is required")
    if base is str:
        return str(value)
    if base is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(key, f"expected true/false, got {value!r}")
    if base is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return value
    if base is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        return float(value)
    if base is list or typing.get_origin(base) is list:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(key, f"expected a bracketed list, got {value!r}")
        return json.loads(json.dumps(value))
    return value


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    base = base if base is not None else ExperimentConfig()
    # copy sections so ``base`` is untouched
    cfg = ExperimentConfig(**{n: dataclasses.replace(getattr(base, n)) for n in base.section_names()})
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}", "expected 'section.key = value'")
        section_name, dot, name = key.partition(".")
        if not dot:
            raise ConfigError(key, "keys need a section prefix, e.g. solver.dt")
        if section_name == "manifest":
            continue
        if section_name not in cfg.section_names():
            raise ConfigError(key, f"unknown section {section_name!r}")
        section = getattr(cfg, section_name)
        hints = _field_types(section)
        if name not in hints:
            raise ConfigError(key, "unknown key")
        setattr(section, name, _coerce(key, _parse_value(raw), hints[name]))
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text("utf-8")
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from None
    cfg = parse_config(text)
    # relative paths resolve against the config file's directory
    for attr in ("score_path", "groups_path"):
        value = getattr(cfg.experiment, attr)
        if value and not Path(value).is_absolute():
            setattr(cfg.experiment, attr, str((path.parent / value).resolve()))
    return cfg


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, (list, tuple)):
        return json.dumps(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_config(cfg: ExperimentConfig) -> str:
    lines = []
    for name in cfg.section_names():
        section = getattr(cfg, name)
        for f in dataclasses.fields(section):
            lines.append(f"{name}.{f.name} = {_format_value(getattr(section, f.name))}")
    return "\n".join(lines) + "\n"


def _check(ok: bool, key: str, message: str):
    if not ok:
        raise ConfigError(key, message)


def validate(cfg: ExperimentConfig) -> None:
    """Raise :class:`ConfigError` on the first invalid field."""
    e = cfg.experiment
    _check(e.method in ("rate", "td", "both"), "experiment.method", "must be rate, td or both")
    _check(e.episodes >= 1, "experiment.episodes", "must be >= 1")
    _check(len(e.seeds) >= 1, "experiment.seeds", "at least one seed is required")
    _check(all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in e.seeds),
           "experiment.seeds", "seeds must be nonnegative integers")
    _check(len(set(e.seeds)) == len(e.seeds), "experiment.seeds", "seeds must be distinct")
    _check(e.workers >= 1, "experiment.workers", "must be >= 1")
    for attr in ("score_path", "groups_path"):
        value = getattr(e, attr)
        _check(not value or Path(value).is_file(), f"experiment.{attr}", f"file not found: {value}")

    _check(cfg.score.window >= 1, "score.window", "must be >= 1")

    v = cfg.env
    _check(v.hidden_states >= 1, "env.hidden_states", "must be >= 1")
    _check(0.0 <= v.hidden_stay <= 1.0, "env.hidden_stay", "must lie in [0, 1]")
    _check(0.0 <= v.emission_noise <= 1.0, "env.emission_noise", "must lie in [0, 1]")
    _check(0 <= v.radius <= 11, "env.radius", "must lie in [0, 11]")
    for k in ("reward_w1", "reward_w2", "reward_bonus", "pitch_noise", "timing_noise", "lead_in"):
        _check(getattr(v, k) >= 0, f"env.{k}", "must be nonnegative")
    _check(0.0 <= v.attention <= 1.0, "env.attention", "must lie in [0, 1]")

    c = cfg.constraints
    _check(c.sample_rate > 0, "constraints.sample_rate", "must be positive")
    _check(c.window_len >= 2 and c.window_len & (c.window_len - 1) == 0,
           "constraints.window_len", "must be a power of two >= 2")
    _check(c.hop >= 1, "constraints.hop", "must be >= 1")
    if c.weights is not None:
        _check(len(c.weights) == c.window_len // 2 + 1 and all(w >= 0 for w in c.weights),
               "constraints.weights", "need window_len/2 + 1 nonnegative entries")
    _check(c.M > 0, "constraints.M", "must be positive")
    _check(c.delta_window >= 1, "constraints.delta_window", "must be >= 1")
    _check(c.tradeoff_delta >= 0, "constraints.tradeoff_delta", "must be nonnegative")
    for k in ("k1", "k2", "floor"):
        _check(getattr(c, k) > 0, f"constraints.{k}", "must be positive")
    _check(c.resolution >= 2, "constraints.resolution", "must be >= 2")

    s = cfg.solver
    _check(s.dt > 0, "solver.dt", "must be positive")
    _check(s.sigma >= 0, "solver.sigma", "must be nonnegative")
    _check(s.zeta_min <= s.zeta_max, "solver.zeta_min", "must not exceed solver.zeta_max")
    _check(0.0 <= s.zeta_min and s.zeta_max <= 1.0, "solver.zeta_max", "clamp must lie within [0, 1]")
    _check(s.utility in ("linear", "log-saturating"), "solver.utility", "must be linear or log-saturating")
    _check(s.slope >= 0 and s.scale > 0 and s.cap > 0, "solver.utility", "slope >= 0, scale > 0, cap > 0")

    l = cfg.learner
    _check(0.0 <= l.gamma < 1.0, "learner.gamma", "must lie in [0, 1)")
    _check(0.0 < l.alpha <= 1.0, "learner.alpha", "must lie in (0, 1]")
    _check(l.alpha_schedule in ("constant", "visits"), "learner.alpha_schedule", "must be constant or visits")
    _check(0.0 <= l.epsilon <= 1.0, "learner.epsilon", "must lie in [0, 1]")
    _check(0.0 < l.epsilon_decay <= 1.0, "learner.epsilon_decay", "must lie in (0, 1]")
    _check(l.zeta_mode in ("scalar", "per-pair"), "learner.zeta_mode", "must be scalar or per-pair")
    _check(0.0 <= l.zeta_bootstrap <= 1.0, "learner.zeta_bootstrap", "must lie in [0, 1]")

    m = cfg.compare
    _check(m.smoothing >= 1, "compare.smoothing", "must be >= 1")
    _check(m.final_window >= 1, "compare.final_window", "must be >= 1")
