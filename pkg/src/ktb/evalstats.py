"""Reliability-aware evaluation statistics.

Raw evaluation runs (per task, per seed, per episode scores and death
levels) turn into: normalized scores, aggregate point estimates (mean,
median, interquartile mean, optimality gap) with stratified-bootstrap
confidence intervals, performance profiles, and pairwise probability of
improvement. Resampling is stratified by task: every replicate redraws each
task's entries with replacement, keeping per-task sample sizes intact, and
only then pools. Point estimates over means of means are exactly the
pathology this module avoids; everything here works on the flat pool of
episode outcomes.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .catalog import TaskCategory, catalog_category, normalization_scores
from .errors import MismatchedTasks

STATISTICS = ("mean", "median", "iqm", "optimality_gap")
METRICS = ("normalized_score", "death_level", "raw_score")

_CHUNK = 256  # replicates processed per vectorized block


@dataclass(frozen=True)
class BootstrapConfig:
    replicates: int = 2000
    level: float = 0.95
    seed: int = 0

    def __post_init__(self):
        if self.replicates < 100:
            raise ValueError("need at least 100 bootstrap replicates")
        if not 0.0 < self.level < 1.0:
            raise ValueError("confidence level must be in (0, 1)")


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

def normalize_minmax(score, task):
    """100 * (score - min) / (max - min), clamped below at zero."""
    ns = normalization_scores(task)
    value = 100.0 * (np.asarray(score, dtype=np.float64) - ns.min_score) \
        / (ns.max_score - ns.min_score)
    return np.maximum(value, 0.0)


def normalize_mean(score, task):
    """100 * score / mean reference score (no clamping)."""
    ns = normalization_scores(task)
    return 100.0 * np.asarray(score, dtype=np.float64) / ns.mean_score


# ---------------------------------------------------------------------------
# Run matrices
# ---------------------------------------------------------------------------

class EvalRunMatrix:
    """Evaluation outcomes for one algorithm: rows of
    (task, seed, episode, score, death_level)."""

    def __init__(self, rows: list[dict]):
        self.rows = [dict(r) for r in rows]

    @classmethod
    def from_jsonl(cls, path: str) -> "EvalRunMatrix":
        rows = []
        with open(path) as f:
            for line in f:
                line = line.strip()
                if line:
                    rows.append(json.loads(line))
        return cls(rows)

    def to_jsonl(self, path: str):
        with open(path, "w") as f:
            for r in self.rows:
                f.write(json.dumps(r) + "\n")

    def tasks(self) -> list[str]:
        return sorted({r["task"] for r in self.rows})

    def validate(self):
        counts = {}
        for r in self.rows:
            counts.setdefault((r["task"], r["seed"]), 0)
            counts[(r["task"], r["seed"])] += 1
            if r["score"] < 0:
                raise ValueError(f"negative score in {r}")
            if r["death_level"] < 1:
                raise ValueError(f"death_level < 1 in {r}")
        if len(set(counts.values())) > 1:
            raise ValueError(f"uneven episode counts per (task, seed): {counts}")

    def per_task(self, metric: str, normalizer: str = "minmax") -> dict[str, np.ndarray]:
        """Pool (seed, episode) entries per task under the chosen metric."""
        by_task: dict[str, list[float]] = {}
        for r in self.rows:
            by_task.setdefault(r["task"], []).append(
                r["death_level"] if metric == "death_level" else r["score"])
        out = {}
        for task, vals in by_task.items():
            arr = np.asarray(vals, dtype=np.float64)
            if metric == "normalized_score":
                arr = (normalize_minmax(arr, task) if normalizer == "minmax"
                       else normalize_mean(arr, task))
            out[task] = arr
        return out

    def filter_category(self, category: TaskCategory | str | None) -> "EvalRunMatrix":
        if category is None:
            return self
        cat = TaskCategory(category) if isinstance(category, str) else category
        keep = [r for r in self.rows if catalog_category(r["task"]) is cat]
        return EvalRunMatrix(keep)


# ---------------------------------------------------------------------------
# Point estimates
# ---------------------------------------------------------------------------

def aggregate(values, statistic: str, gamma0: float = 100.0) -> float:
    """One scalar from a pooled sample. IQM trims floor(n/4) from each end
    of the sorted sample and averages the rest; optimality_gap is the mean
    shortfall below gamma0."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("cannot aggregate an empty sample")
    if statistic == "mean":
        return float(v.mean())
    if statistic == "median":
        return float(np.median(v))
    if statistic == "iqm":
        s = np.sort(v)
        k = s.size // 4
        return float(s[k:s.size - k].mean())
    if statistic == "optimality_gap":
        return float(np.maximum(gamma0 - v, 0.0).mean())
    raise ValueError(f"unknown statistic {statistic!r}")


def _stat_rows(arr: np.ndarray, statistic: str, gamma0: float) -> np.ndarray:
    """aggregate() applied along axis 1 of a [replicates, n] block."""
    if statistic == "mean":
        return arr.mean(axis=1)
    if statistic == "median":
        return np.median(arr, axis=1)
    if statistic == "iqm":
        s = np.sort(arr, axis=1)
        k = s.shape[1] // 4
        return s[:, k:s.shape[1] - k].mean(axis=1)
    if statistic == "optimality_gap":
        return np.maximum(gamma0 - arr, 0.0).mean(axis=1)
    raise ValueError(f"unknown statistic {statistic!r}")


def _resample_pool(per_task: dict[str, np.ndarray], n_rep: int,
                   rng: np.random.Generator) -> np.ndarray:
    """[n_rep, N_total] pooled values, each row one task-stratified
    resample (per-task sizes preserved)."""
    blocks = []
    for task in sorted(per_task):
        vals = per_task[task]
        idx = rng.integers(0, vals.size, size=(n_rep, vals.size))
        blocks.append(vals[idx])
    return np.concatenate(blocks, axis=1)


def _percentile_ci(samples: np.ndarray, level: float) -> tuple[float, float]:
    alpha = (1.0 - level) / 2.0
    lo, hi = np.percentile(samples, [100.0 * alpha, 100.0 * (1.0 - alpha)])
    return float(lo), float(hi)


def stratified_bootstrap_ci(per_task: dict[str, np.ndarray], statistic: str,
                            cfg: BootstrapConfig = BootstrapConfig(),
                            gamma0: float = 100.0) -> tuple[float, float, float]:
    """(point, low, high): the statistic over the pooled sample plus a
    percentile interval over task-stratified resamples."""
    pooled = np.concatenate([per_task[t] for t in sorted(per_task)])
    point = aggregate(pooled, statistic, gamma0)
    rng = np.random.default_rng(cfg.seed)
    reps = []
    done = 0
    while done < cfg.replicates:
        n = min(_CHUNK, cfg.replicates - done)
        reps.append(_stat_rows(_resample_pool(per_task, n, rng), statistic, gamma0))
        done += n
    lo, hi = _percentile_ci(np.concatenate(reps), cfg.level)
    return point, lo, hi


# ---------------------------------------------------------------------------
# Performance profiles
# ---------------------------------------------------------------------------

def _profile_fractions(per_task: dict[str, np.ndarray], taus: np.ndarray) -> np.ndarray:
    fr = np.zeros(taus.size)
    for vals in per_task.values():
        fr += (vals[:, None] > taus[None, :]).mean(axis=0)
    return fr / len(per_task)


def performance_profile(per_task: dict[str, np.ndarray], taus,
                        cfg: BootstrapConfig = BootstrapConfig()) -> dict:
    """fraction(tau) = task-averaged share of runs beating tau, with a
    stratified-bootstrap band. Non-increasing in tau by construction."""
    taus = np.asarray(taus, dtype=np.float64)
    point = _profile_fractions(per_task, taus)

    rng = np.random.default_rng(cfg.seed)
    reps = np.zeros((cfg.replicates, taus.size))
    done = 0
    while done < cfg.replicates:
        n = min(_CHUNK, cfg.replicates - done)
        acc = np.zeros((n, taus.size))
        for task in sorted(per_task):
            vals = per_task[task]
            idx = rng.integers(0, vals.size, size=(n, vals.size))
            acc += (vals[idx][:, :, None] > taus[None, None, :]).mean(axis=1)
        reps[done:done + n] = acc / len(per_task)
        done += n
    alpha = (1.0 - cfg.level) / 2.0
    lo, hi = np.percentile(reps, [100.0 * alpha, 100.0 * (1.0 - alpha)], axis=0)
    return {"taus": taus.tolist(), "fraction": point.tolist(),
            "low": lo.tolist(), "high": hi.tolist()}


# ---------------------------------------------------------------------------
# Probability of improvement
# ---------------------------------------------------------------------------

def _poi_task(x: np.ndarray, y: np.ndarray) -> float:
    wins = (x[:, None] > y[None, :]).sum()
    ties = (x[:, None] == y[None, :]).sum()
    return (wins + 0.5 * ties) / (x.size * y.size)


def probability_of_improvement(per_task_x: dict[str, np.ndarray],
                               per_task_y: dict[str, np.ndarray],
                               cfg: BootstrapConfig = BootstrapConfig()
                               ) -> tuple[float, float, float]:
    """Task-averaged P(X > Y) with ties counted half, plus a stratified
    bootstrap interval. Task sets must match exactly."""
    if set(per_task_x) != set(per_task_y):
        raise MismatchedTasks(
            f"task sets differ: {sorted(set(per_task_x) ^ set(per_task_y))}")
    tasks = sorted(per_task_x)
    point = float(np.mean([_poi_task(per_task_x[t], per_task_y[t]) for t in tasks]))

    rng = np.random.default_rng(cfg.seed)
    reps = np.zeros(cfg.replicates)
    done = 0
    while done < cfg.replicates:
        n = min(_CHUNK, cfg.replicates - done)
        acc = np.zeros(n)
        for t in tasks:
            x, y = per_task_x[t], per_task_y[t]
            xr = x[rng.integers(0, x.size, size=(n, x.size))]
            yr = y[rng.integers(0, y.size, size=(n, y.size))]
            gt = (xr[:, :, None] > yr[:, None, :]).sum(axis=(1, 2))
            eq = (xr[:, :, None] == yr[:, None, :]).sum(axis=(1, 2))
            acc += (gt + 0.5 * eq) / (x.size * y.size)
        reps[done:done + n] = acc / len(tasks)
        done += n
    lo, hi = _percentile_ci(reps, cfg.level)
    return point, lo, hi


# ---------------------------------------------------------------------------
# Report bundle
# ---------------------------------------------------------------------------

def report(matrices: dict[str, EvalRunMatrix], metric: str = "normalized_score",
           category: str | None = None, baseline: str | None = None,
           cfg: BootstrapConfig = BootstrapConfig(), gamma0: float = 100.0,
           normalizer: str = "minmax", taus=None) -> dict:
    """Plot-ready JSON bundle: point estimates with CIs, profiles, and
    pairwise probability-of-improvement for every algorithm."""
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}")
    per_algo: dict[str, dict[str, np.ndarray]] = {}
    for name, matrix in matrices.items():
        matrix.validate()
        filtered = matrix.filter_category(category)
        if not filtered.rows:
            raise MismatchedTasks(f"no rows left for {name!r} "
                                  f"after category filter {category!r}")
        per_algo[name] = filtered.per_task(metric, normalizer)

    task_sets = {name: frozenset(d) for name, d in per_algo.items()}
    if len(set(task_sets.values())) > 1:
        raise MismatchedTasks(f"algorithms cover different task sets: "
                              f"{ {k: sorted(v) for k, v in task_sets.items()} }")

    if taus is None:
        top = max(float(v.max()) for d in per_algo.values() for v in d.values())
        taus = np.linspace(0.0, max(top, 1e-9), 101)
    taus = np.asarray(taus, dtype=np.float64)

    bundle = {
        "metric": metric,
        "normalizer": normalizer if metric == "normalized_score" else None,
        "category": category,
        "gamma0": gamma0,
        "bootstrap": {"replicates": cfg.replicates, "level": cfg.level,
                      "seed": cfg.seed},
        "algorithms": {},
        "probability_of_improvement": {},
    }
    for name, per_task in sorted(per_algo.items()):
        est = {}
        for stat in STATISTICS:
            point, lo, hi = stratified_bootstrap_ci(per_task, stat, cfg, gamma0)
            est[stat] = {"point": point, "low": lo, "high": hi}
        n_points = int(sum(v.size for v in per_task.values()))
        bundle["algorithms"][name] = {
            "tasks": sorted(per_task),
            "n_points": n_points,
            "point_estimates": est,
            "profile": performance_profile(per_task, taus, cfg),
        }

    names = sorted(per_algo)
    if baseline is not None:
        if baseline not in per_algo:
            raise ValueError(f"baseline {baseline!r} not among {names}")
        pairs = [(baseline, other) for other in names if other != baseline]
    else:
        pairs = [(a, b) for i, a in enumerate(names) for b in names[i + 1:]]
    for x, y in pairs:
        point, lo, hi = probability_of_improvement(per_algo[x], per_algo[y], cfg)
        bundle["probability_of_improvement"][f"{x}_vs_{y}"] = {
            "point": point, "low": lo, "high": hi}
    return bundle


def write_report(bundle: dict, outdir: str) -> list[str]:
    """Materialize a bundle as report.json plus three CSVs."""
    os.makedirs(outdir, exist_ok=True)
    written = []

    path = os.path.join(outdir, "report.json")
    with open(path, "w") as f:
        json.dump(bundle, f, indent=2)
    written.append(path)

    path = os.path.join(outdir, "point_estimates.csv")
    with open(path, "w") as f:
        f.write("algorithm,statistic,point,low,high\n")
        for name, data in bundle["algorithms"].items():
            for stat, e in data["point_estimates"].items():
                f.write(f"{name},{stat},{e['point']:.6f},{e['low']:.6f},{e['high']:.6f}\n")
    written.append(path)

    path = os.path.join(outdir, "profiles.csv")
    with open(path, "w") as f:
        f.write("algorithm,tau,fraction,low,high\n")
        for name, data in bundle["algorithms"].items():
            p = data["profile"]
            for tau, fr, lo, hi in zip(p["taus"], p["fraction"], p["low"], p["high"]):
                f.write(f"{name},{tau:.6f},{fr:.6f},{lo:.6f},{hi:.6f}\n")
    written.append(path)

    path = os.path.join(outdir, "probability_of_improvement.csv")
    with open(path, "w") as f:
        f.write("pair,point,low,high\n")
        for pair, e in bundle["probability_of_improvement"].items():
            f.write(f"{pair},{e['point']:.6f},{e['low']:.6f},{e['high']:.6f}\n")
    written.append(path)
    return written
