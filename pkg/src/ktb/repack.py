"""Convert raw source-convention streams into aligned episode records.

Source streams store, at each step, the reward received *before* the step
(the r_{t-1} convention) plus the cumulative score. Training wants tuples
where the reward at index t follows the action taken at t, so alignment
rewrites rewards as consecutive score differences: reward[t] =
score[t+1] - score[t], and the last step gets the score delta recorded at
termination (0 when the source provides none). Every source step appears in
the output; nothing is dropped.

Also here: stratified subsampling of episodes by final score, and the
length-prefixed .krs raw-stream exchange format (docs/raw_stream_format.md)
used to move episodes between tools without a game engine.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .catalog import SCREEN_COLS, SCREEN_ROWS, parse_task_id
from .episode import EpisodeMetadata, EpisodeRecord
from .errors import EmptyStream, IoError, NonMonotoneTermination, TargetExceedsPopulation
from .prng import SplitMix64
from .store import WriteSummary, write_store

RAW_MAGIC = b"KRS1"
RAW_VERSION = 1

_STEP_FIXED = struct.Struct("<hhBiiB")  # cursor row/col, action, prev_reward, score, terminal
_SCREEN_BYTES = SCREEN_ROWS * SCREEN_COLS
STEP_RECORD_BYTES = 2 * _SCREEN_BYTES + _STEP_FIXED.size


@dataclass
class RawStepTuple:
    tty_chars: np.ndarray   # [24, 80] u1
    tty_colors: np.ndarray  # [24, 80] i1
    tty_cursor: tuple[int, int]
    action: int
    prev_reward: int        # score delta received before this step
    score: int              # cumulative in-game score at this step
    terminal: bool


@dataclass
class RawEpisode:
    task_id: str
    episode_id: str
    steps: list[RawStepTuple]
    death_level: int = 1
    final_score_delta: int = 0  # score event at termination, if the source had one


def shape_rewards(scores, final_delta: int = 0) -> np.ndarray:
    """Rewards as differences of the cumulative-score potential.

    output[t] = score[t+1] - score[t] for t < T-1, output[T-1] = final_delta,
    so the outputs sum to (final score - initial score + final_delta).
    """
    scores = np.asarray(scores, dtype=np.int64)
    if scores.ndim != 1 or scores.shape[0] < 1:
        raise EmptyStream("need at least one score")
    out = np.empty(scores.shape[0], dtype=np.int32)
    out[:-1] = np.diff(scores)
    out[-1] = final_delta
    return out


def align_episode(raw: RawEpisode) -> EpisodeRecord:
    """Repack one raw stream into an aligned EpisodeRecord."""
    steps = raw.steps
    if not steps:
        raise EmptyStream(f"episode {raw.episode_id!r} has no steps")
    for t, s in enumerate(steps[:-1]):
        if s.terminal:
            raise NonMonotoneTermination(
                f"episode {raw.episode_id!r}: terminal flag at step {t} of {len(steps)}")
    if not steps[-1].terminal:
        raise NonMonotoneTermination(
            f"episode {raw.episode_id!r}: last step is not terminal")

    n = len(steps)
    chars = np.stack([s.tty_chars for s in steps]).astype(np.uint8)
    colors = np.stack([s.tty_colors for s in steps]).astype(np.int8)
    cursor = np.asarray([s.tty_cursor for s in steps], dtype=np.int16)
    actions = np.asarray([s.action for s in steps], dtype=np.uint8)
    scores = np.asarray([s.score for s in steps], dtype=np.int64)
    rewards = shape_rewards(scores, raw.final_score_delta)
    dones = np.zeros(n, dtype=np.uint8)
    dones[-1] = 1

    final_score = int(scores[-1] - scores[0] + raw.final_score_delta)
    meta = EpisodeMetadata(
        character=parse_task_id(raw.task_id),
        final_score=max(final_score, 0),
        death_level=raw.death_level,
        turns=n,
        episode_id=raw.episode_id,
    )
    return EpisodeRecord(tty_chars=chars, tty_colors=colors, tty_cursor=cursor,
                         actions=actions, rewards=rewards, dones=dones, metadata=meta)


# ---------------------------------------------------------------------------
# Stratified subsampling
# ---------------------------------------------------------------------------

@dataclass
class StrataPlan:
    n_strata: int = 10
    target_episodes: int = 680
    seed: int = 0
    boundaries: list[float] = field(default_factory=list)  # filled from data when empty

    def __post_init__(self):
        if self.n_strata < 1:
            raise ValueError("n_strata must be >= 1")
        if self.target_episodes < 1:
            raise ValueError("target_episodes must be >= 1")
        if any(b > a for a, b in zip(self.boundaries, self.boundaries[1:])):
            raise ValueError("boundaries must be monotone non-decreasing")


def subsample_stratified(final_scores, plan: StrataPlan) -> np.ndarray:
    """Pick plan.target_episodes indices, stratified by final score.

    Strata are score-quantile bins; within each bin the draw is uniform
    without replacement with quota round(target * bin_mass). Deterministic
    for a given plan.seed.
    """
    scores = np.asarray(final_scores, dtype=np.float64)
    n = scores.shape[0]
    if plan.target_episodes > n:
        raise TargetExceedsPopulation(
            f"target {plan.target_episodes} > population {n}")

    if plan.boundaries:
        edges = np.asarray(plan.boundaries, dtype=np.float64)
    else:
        qs = np.arange(1, plan.n_strata) / plan.n_strata
        edges = np.quantile(scores, qs, method="linear")
    bins = np.digitize(scores, edges, right=True)

    rng = SplitMix64(plan.seed)
    selected: list[int] = []
    for b in range(len(edges) + 1):
        members = np.flatnonzero(bins == b)
        if members.size == 0:
            continue
        quota = int(round(plan.target_episodes * members.size / n))
        quota = min(quota, members.size)
        # partial Fisher-Yates over the member list, seeded draw order
        pool = members.copy()
        for i in range(quota):
            j = i + rng.bounded(pool.size - i)
            pool[i], pool[j] = pool[j], pool[i]
        selected.extend(int(x) for x in pool[:quota])
    return np.asarray(sorted(selected), dtype=np.int64)


# ---------------------------------------------------------------------------
# Raw-stream exchange format (.krs)
# ---------------------------------------------------------------------------

def write_raw_stream(path: str | os.PathLike, episodes: list[RawEpisode]):
    with open(path, "wb") as f:
        f.write(RAW_MAGIC)
        f.write(struct.pack("<II", RAW_VERSION, len(episodes)))
        for ep in episodes:
            meta = json.dumps({
                "task_id": ep.task_id,
                "episode_id": ep.episode_id,
                "death_level": ep.death_level,
                "final_score_delta": ep.final_score_delta,
            }).encode()
            f.write(struct.pack("<I", len(meta)))
            f.write(meta)
            f.write(struct.pack("<I", len(ep.steps)))
            for s in ep.steps:
                f.write(struct.pack("<I", STEP_RECORD_BYTES))
                f.write(np.ascontiguousarray(s.tty_chars, dtype=np.uint8).tobytes())
                f.write(np.ascontiguousarray(s.tty_colors, dtype=np.int8).tobytes())
                f.write(_STEP_FIXED.pack(int(s.tty_cursor[0]), int(s.tty_cursor[1]),
                                         int(s.action), int(s.prev_reward),
                                         int(s.score), 1 if s.terminal else 0))


def read_raw_stream(path: str | os.PathLike) -> list[RawEpisode]:
    def need(f, n):
        data = f.read(n)
        if len(data) != n:
            raise IoError(f"{path}: unexpected end of stream")
        return data

    episodes = []
    with open(path, "rb") as f:
        if need(f, 4) != RAW_MAGIC:
            raise IoError(f"{path}: not a raw stream file")
        version, count = struct.unpack("<II", need(f, 8))
        if version != RAW_VERSION:
            raise IoError(f"{path}: raw stream version {version} unsupported")
        for _ in range(count):
            (meta_len,) = struct.unpack("<I", need(f, 4))
            meta = json.loads(need(f, meta_len))
            (n_steps,) = struct.unpack("<I", need(f, 4))
            steps = []
            for _t in range(n_steps):
                (rec_len,) = struct.unpack("<I", need(f, 4))
                if rec_len != STEP_RECORD_BYTES:
                    raise IoError(f"{path}: step record length {rec_len}, "
                                  f"expected {STEP_RECORD_BYTES}")
                chars = np.frombuffer(need(f, _SCREEN_BYTES), dtype=np.uint8)
                colors = np.frombuffer(need(f, _SCREEN_BYTES), dtype=np.int8)
                row, col, action, prev_reward, score, terminal = \
                    _STEP_FIXED.unpack(need(f, _STEP_FIXED.size))
                steps.append(RawStepTuple(
                    tty_chars=chars.reshape(SCREEN_ROWS, SCREEN_COLS),
                    tty_colors=colors.reshape(SCREEN_ROWS, SCREEN_COLS),
                    tty_cursor=(row, col), action=action,
                    prev_reward=prev_reward, score=score, terminal=bool(terminal)))
            episodes.append(RawEpisode(
                task_id=meta["task_id"], episode_id=meta["episode_id"],
                steps=steps, death_level=int(meta.get("death_level", 1)),
                final_score_delta=int(meta.get("final_score_delta", 0))))
    return episodes


def import_source(input_path: str | os.PathLike, task_id: str, plan: StrataPlan,
                  output_path: str | os.PathLike,
                  compression: str = "deflate") -> WriteSummary:
    """Align + subsample every .krs episode under input_path into a store.

    input_path may be a single .krs file or a directory of them (scanned in
    sorted name order); selected episodes are written in input order so the
    output is byte-reproducible.
    """
    input_path = Path(input_path)
    files = [input_path] if input_path.is_file() else sorted(input_path.glob("*.krs"))
    if not files:
        raise EmptyStream(f"no .krs files under {input_path}")

    raw_episodes: list[RawEpisode] = []
    for fp in files:
        raw_episodes.extend(read_raw_stream(fp))
    raw_episodes = [ep for ep in raw_episodes if ep.task_id == task_id]
    if not raw_episodes:
        raise EmptyStream(f"no episodes for task {task_id!r} under {input_path}")

    aligned = [align_episode(ep) for ep in raw_episodes]
    finals = [ep.metadata.final_score for ep in aligned]
    keep = subsample_stratified(finals, plan)
    return write_store(output_path, [aligned[i] for i in keep], compression)
