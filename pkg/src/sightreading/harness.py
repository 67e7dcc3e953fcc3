"""Seeded experiment runs, method comparison and CSV/manifest output."""

from __future__ import annotations

import copy
import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from . import __version__
from .config import ExperimentConfig, format_config, validate
from .constraints import UncertaintyParams, raw_tradeoff, tradeoff_curve
from .learner import make_agent, run_episode, softmax_rows
from .pomdp import ParamSet, SightReadingEnv, default_params
from .score import Score, load_default_groups, load_default_score, parse_groups, parse_score

CSV_COLUMNS = (
    "episode",
    "total_reward",
    "mean_delta",
    "mean_beta",
    "mean_dc1",
    "mean_dc2",
    "min_product",
    "zeta_selected",
)
STEP_COLUMNS = (
    "episode", "phrase", "position", "state", "hidden", "action", "next_state", "correct",
    "reward", "flag", "beta", "delta", "raw_dc1", "raw_dc2", "dc1", "dc2", "bound", "zeta",
)
TRADEOFF_COLUMNS = ("lambda", "d_c1", "d_c2", "product")
NEVER = "∞"


def fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


@dataclass
class RunResult:
    method: str
    seed: int
    rows: list[dict]
    values: np.ndarray
    preferences: np.ndarray | None
    group_labels: list[str]
    steps: list[dict] = field(default_factory=list)

    def series(self, column: str) -> np.ndarray:
        return np.array([r[column] for r in self.rows], dtype=float)


def load_score(cfg: ExperimentConfig) -> Score:
    path = cfg.experiment.score_path
    return parse_score(Path(path).read_text("utf-8")) if path else load_default_score()


def load_groups(cfg: ExperimentConfig):
    path = cfg.experiment.groups_path
    return parse_groups(Path(path).read_text("utf-8")) if path else load_default_groups()


def build_params(cfg: ExperimentConfig, n_groups: int) -> ParamSet:
    v = cfg.env
    base = default_params(v.hidden_states, n_groups, v.hidden_stay, v.emission_noise)
    return ParamSet(
        np.asarray(v.emission, dtype=float) if v.emission is not None else base.emission,
        np.asarray(v.hidden_prior, dtype=float) if v.hidden_prior is not None else base.hidden_prior,
        np.asarray(v.hidden_transition, dtype=float) if v.hidden_transition is not None
        else base.hidden_transition,
    )


def build_env(cfg: ExperimentConfig, seed: int) -> SightReadingEnv:
    score = load_score(cfg)
    groups = load_groups(cfg)
    eta = build_params(cfg, len(groups))
    rng = np.random.default_rng([seed, 0])
    return SightReadingEnv(score, groups, eta, rng, cfg.score.window, cfg.env, cfg.constraints)


def run_seed(cfg: ExperimentConfig, method: str, seed: int, keep_steps: bool = False) -> RunResult:
    env = build_env(cfg, seed)
    agent = make_agent(method, env, seed, cfg.learner, cfg.solver)
    rows, steps = [], []
    for k in range(cfg.experiment.episodes):
        res = run_episode(env, agent, k)
        rows.append({"episode": k + 1, **res.metrics()})
        if keep_steps:
            for rec in res.records:
                steps.append({
                    "episode": k + 1, "phrase": res.phrase_index, "position": rec.position,
                    "state": rec.from_state.observable, "hidden": rec.from_state.hidden,
                    "action": rec.action, "next_state": rec.to_state.observable,
                    "correct": int(rec.correct), "reward": rec.reward, "flag": rec.flag,
                    "beta": rec.beta, "delta": rec.delta, "raw_dc1": rec.raw_errors.d_c1,
                    "raw_dc2": rec.raw_errors.d_c2, "dc1": rec.errors.d_c1,
                    "dc2": rec.errors.d_c2, "bound": rec.bound, "zeta": res.zeta_selected,
                })
    prefs = agent.pi.preferences.copy() if method == "rate" else None
    labels = [g.label for g in env.groups]
    return RunResult(method, seed, rows, agent.V.values.copy(), prefs, labels, steps)


def csv_text(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r[c]) for c in columns])
    return buf.getvalue()


def tables_text(res: RunResult) -> str:
    lines = []
    for label, v in zip(res.group_labels, res.values):
        lines.append(f"V.{label} = {fmt(float(v))}")
    if res.preferences is not None:
        dist = softmax_rows(res.preferences)
        for label, h, p in zip(res.group_labels, res.preferences, dist):
            lines.append(f"h.{label} = [{', '.join(fmt(float(x)) for x in h)}]")
            lines.append(f"pi.{label} = [{', '.join(fmt(float(x)) for x in p)}]")
    return "\n".join(lines) + "\n"


def manifest_text(cfg: ExperimentConfig, method: str, seed: int) -> str:
    one = copy.deepcopy(cfg)
    one.experiment.method = method
    one.experiment.seeds = [seed]
    head = [f"manifest.version = {__version__}", f"manifest.method = {method}", f"manifest.seed = {seed}"]
    return "\n".join(head) + "\n" + format_config(one)


def _methods(cfg: ExperimentConfig) -> list[str]:
    return ["rate", "td"] if cfg.experiment.method == "both" else [cfg.experiment.method]


def _run_and_write(cfg: ExperimentConfig, method: str, seed: int, out: str, trajectories: bool) -> str:
    res = run_seed(cfg, method, seed, keep_steps=trajectories)
    out_dir = Path(out)
    stem = f"{method}_seed{seed}"
    (out_dir / f"{stem}.csv").write_text(csv_text(res.rows, CSV_COLUMNS), "utf-8")
    (out_dir / f"{stem}_manifest.txt").write_text(manifest_text(cfg, method, seed), "utf-8")
    (out_dir / f"{stem}_tables.txt").write_text(tables_text(res), "utf-8")
    if trajectories:
        (out_dir / f"{stem}_steps.tsv").write_text(
            csv_text(res.steps, STEP_COLUMNS).replace(",", "\t"), "utf-8")
    return stem


def run_experiment(cfg: ExperimentConfig, trajectories: bool = False) -> list[Path]:
    """Run every (method, seed) pair and write per-seed CSVs plus manifests.

    With several seeds a ``<method>_merged.csv`` is written afterwards in
    ascending seed order.  Returns the CSV paths written.
    """
    validate(cfg)
    out_dir = Path(cfg.experiment.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(m, s) for m in _methods(cfg) for s in sorted(cfg.experiment.seeds)]
    workers = min(cfg.experiment.workers, len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_and_write, cfg, m, s, str(out_dir), trajectories) for m, s in jobs]
            for f in futures:
                f.result()
    else:
        for m, s in jobs:
            _run_and_write(cfg, m, s, str(out_dir), trajectories)

    written = [out_dir / f"{m}_seed{s}.csv" for m, s in jobs]
    if len(cfg.experiment.seeds) > 1:
        for m in _methods(cfg):
            parts = []
            for s in sorted(cfg.experiment.seeds):
                body = (out_dir / f"{m}_seed{s}.csv").read_text("utf-8").splitlines()[1:]
                parts.extend(f"{s},{line}" for line in body)
            merged = out_dir / f"{m}_merged.csv"
            merged.write_text(",".join(("seed",) + CSV_COLUMNS) + "\n" + "\n".join(parts) + "\n", "utf-8")
            written.append(merged)
    return written


def read_run_csv(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or tuple(rows[0].keys()) != CSV_COLUMNS:
        raise ValueError(f"{path}: not a run CSV with columns {', '.join(CSV_COLUMNS)}")
    return [{k: (int(v) if k == "episode" else float(v)) for k, v in r.items()} for r in rows]


# --- comparison ------------------------------------------------------------


def episodes_to_threshold(rewards: np.ndarray, threshold: float, smoothing: int):
    """First 1-based episode whose trailing mean reaches ``threshold``; NEVER if none."""
    if len(rewards) < smoothing:
        return NEVER
    trailing = np.convolve(rewards, np.ones(smoothing) / smoothing, mode="valid")
    hits = np.nonzero(trailing >= threshold)[0]
    return int(hits[0] + smoothing) if len(hits) else NEVER


def compare_series(rate: np.ndarray, td: np.ndarray, threshold: float, smoothing: int,
                   final_window: int) -> dict:
    if rate.shape != td.shape:
        raise ValueError(f"episode counts differ: {len(rate)} vs {len(td)}")
    n = min(final_window, len(rate))
    diff = rate - td
    wins, losses = int(np.sum(diff > 0)), int(np.sum(diff < 0))
    p = stats.binomtest(wins, wins + losses).pvalue if wins + losses else 1.0
    return {
        "episodes": len(rate),
        "rate_final_mean": float(rate[-n:].mean()),
        "td_final_mean": float(td[-n:].mean()),
        "final_mean_diff": float(rate[-n:].mean() - td[-n:].mean()),
        "rate_episodes_to_threshold": episodes_to_threshold(rate, threshold, smoothing),
        "td_episodes_to_threshold": episodes_to_threshold(td, threshold, smoothing),
        "sign_rate_higher": wins,
        "sign_td_higher": losses,
        "sign_ties": len(rate) - wins - losses,
        "sign_test_p": float(p),
    }


SUMMARY_COLUMNS = (
    "seed", "episodes", "rate_final_mean", "td_final_mean", "final_mean_diff",
    "rate_episodes_to_threshold", "td_episodes_to_threshold",
    "sign_rate_higher", "sign_td_higher", "sign_ties", "sign_test_p",
)


def compare_methods(rate: dict[int, np.ndarray], td: dict[int, np.ndarray], threshold: float = 3.95,
                    smoothing: int = 10, final_window: int = 100) -> list[dict]:
    """Per-seed rows plus an ``all`` row comparing per-episode total reward.

    ``rate`` and ``td`` map seed -> total-reward series.  The aggregate row
    pools the paired episodes of every seed.
    """
    if sorted(rate) != sorted(td):
        raise ValueError("rate and td results cover different seeds")
    rows = []
    for seed in sorted(rate):
        rows.append({"seed": seed, **compare_series(rate[seed], td[seed], threshold, smoothing, final_window)})
    r_all = np.concatenate([rate[s] for s in sorted(rate)])
    t_all = np.concatenate([td[s] for s in sorted(td)])
    agg = compare_series(r_all, t_all, threshold, smoothing, final_window * len(rate))
    agg["rate_final_mean"] = float(np.mean([r["rate_final_mean"] for r in rows]))
    agg["td_final_mean"] = float(np.mean([r["td_final_mean"] for r in rows]))
    agg["final_mean_diff"] = agg["rate_final_mean"] - agg["td_final_mean"]
    for side in ("rate", "td"):
        hits = [r[f"{side}_episodes_to_threshold"] for r in rows]
        finite = [h for h in hits if h != NEVER]
        agg[f"{side}_episodes_to_threshold"] = fmt(float(np.mean(finite))) if len(finite) == len(hits) else NEVER
    agg["episodes"] = rows[0]["episodes"]
    rows.append({"seed": "all", **agg})
    return rows


def compare_dir(out_dir: str | Path, cfg: ExperimentConfig) -> Path:
    """Compare ``rate_seed*.csv`` against ``td_seed*.csv`` in ``out_dir``."""
    out_dir = Path(out_dir)
    rate, td = {}, {}
    for path in sorted(out_dir.glob("rate_seed*.csv")):
        seed = int(path.stem[len("rate_seed"):])
        rate[seed] = np.array([r["total_reward"] for r in read_run_csv(path)])
    for path in sorted(out_dir.glob("td_seed*.csv")):
        seed = int(path.stem[len("td_seed"):])
        td[seed] = np.array([r["total_reward"] for r in read_run_csv(path)])
    if not rate or not td:
        raise FileNotFoundError(f"{out_dir}: need both rate_seed*.csv and td_seed*.csv")
    c = cfg.compare
    rows = compare_methods(rate, td, c.threshold, c.smoothing, c.final_window)
    path = out_dir / "comparison.csv"
    path.write_text(csv_text(rows, SUMMARY_COLUMNS), "utf-8")
    return path


# --- tradeoff curve --------------------------------------------------------


def tradeoff_rows(cfg: ExperimentConfig, resolution: int | None = None) -> list[dict]:
    c = cfg.constraints
    params = UncertaintyParams(c.tradeoff_delta, c.M)
    res = resolution if resolution is not None else c.resolution
    return [
        {"lambda": lam, "d_c1": e.d_c1, "d_c2": e.d_c2, "product": e.product}
        for lam, e in tradeoff_curve(params, res, c.k1, c.k2, c.floor)
    ]


def raw_tradeoff_rows(cfg: ExperimentConfig, resolution: int | None = None) -> list[dict]:
    c = cfg.constraints
    res = resolution if resolution is not None else c.resolution
    rows = []
    for lam in np.linspace(0.0, 1.0, res):
        e = raw_tradeoff(float(lam), c.k1, c.k2, c.floor)
        rows.append({"lambda": float(lam), "d_c1": e.d_c1, "d_c2": e.d_c2, "product": e.product})
    return rows


def emit_tradeoff_curve(cfg: ExperimentConfig, path: str | Path, resolution: int | None = None) -> Path:
    path = Path(path)
    if path.parent and not path.parent.exists():
        os.makedirs(path.parent, exist_ok=True)
    path.write_text(csv_text(tradeoff_rows(cfg, resolution), TRADEOFF_COLUMNS), "utf-8")
    return path
