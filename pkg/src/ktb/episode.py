"""Episode record schema and validation.

An EpisodeRecord is one complete game trajectory: per-step terminal screens,
cursor positions, actions, score-delta rewards and done flags, plus the
character/outcome metadata. The field table below is the single source of
truth for array dtypes and per-step shapes; the store, the loaders and the
foreign bindings all derive their layouts from it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .catalog import SCREEN_COLS, SCREEN_ROWS, CharacterSpec, parse_task_id

# name -> (dtype string, per-step shape). Order is the canonical field order
# used in stores and batch dumps.
FIELD_SPECS: dict[str, tuple[str, tuple[int, ...]]] = {
    "tty_chars": ("u1", (SCREEN_ROWS, SCREEN_COLS)),
    "tty_colors": ("i1", (SCREEN_ROWS, SCREEN_COLS)),
    "tty_cursor": ("i2", (2,)),
    "actions": ("u1", ()),
    "rewards": ("i4", ()),
    "dones": ("u1", ()),
}

FIELD_NAMES = tuple(FIELD_SPECS)


@dataclass(frozen=True)
class EpisodeMetadata:
    character: CharacterSpec
    final_score: int
    death_level: int
    turns: int
    episode_id: str

    def to_dict(self) -> dict:
        return {
            "character": str(self.character),
            "final_score": int(self.final_score),
            "death_level": int(self.death_level),
            "turns": int(self.turns),
            "episode_id": self.episode_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeMetadata":
        return cls(
            character=parse_task_id(d["character"]),
            final_score=int(d["final_score"]),
            death_level=int(d["death_level"]),
            turns=int(d["turns"]),
            episode_id=str(d["episode_id"]),
        )


@dataclass
class EpisodeRecord:
    tty_chars: np.ndarray   # [T, 24, 80] u1
    tty_colors: np.ndarray  # [T, 24, 80] i1
    tty_cursor: np.ndarray  # [T, 2] i2 (row, col)
    actions: np.ndarray     # [T] u1
    rewards: np.ndarray     # [T] i4, in-game score deltas
    dones: np.ndarray       # [T] u1
    metadata: EpisodeMetadata

    def field(self, name: str) -> np.ndarray:
        return getattr(self, name)

    @property
    def length(self) -> int:
        return int(self.tty_chars.shape[0])


@dataclass(frozen=True)
class Violation:
    field: str
    index: int | None
    message: str

    def __str__(self) -> str:
        where = f"{self.field}" if self.index is None else f"{self.field}[{self.index}]"
        return f"{where}: {self.message}"


def validate_episode(record: EpisodeRecord) -> list[Violation]:
    """Check every record invariant; returns an empty list iff valid.

    Violations are report entries, not exceptions, so callers can collect
    everything wrong with a record in one pass.
    """
    out: list[Violation] = []

    lengths = {}
    for name, (dtype, shape) in FIELD_SPECS.items():
        arr = record.field(name)
        if not isinstance(arr, np.ndarray):
            out.append(Violation(name, None, "not an ndarray"))
            continue
        if arr.dtype != np.dtype(dtype):
            out.append(Violation(name, None, f"dtype {arr.dtype}, expected {dtype}"))
        want_ndim = 1 + len(shape)
        if arr.ndim != want_ndim or arr.shape[1:] != shape:
            out.append(Violation(name, None,
                                 f"shape {arr.shape}, expected (T, {', '.join(map(str, shape))})"
                                 if shape else f"shape {arr.shape}, expected (T,)"))
            continue
        lengths[name] = arr.shape[0]

    if not lengths:
        return out
    t_ref = lengths.get("tty_chars", next(iter(lengths.values())))
    if t_ref < 1:
        out.append(Violation("tty_chars", None, "episode length T must be >= 1"))
        return out
    for name, t in lengths.items():
        if t != t_ref:
            out.append(Violation(name, None, f"length mismatch: {t} vs {t_ref}"))
    if any(t != t_ref for t in lengths.values()):
        return out

    dones = record.dones
    if dones.shape[0] == t_ref:
        bad = np.flatnonzero(dones > 1)
        for i in bad[:8]:
            out.append(Violation("dones", int(i), f"value {int(dones[i])} not in {{0, 1}}"))
        if dones[-1] != 1:
            out.append(Violation("dones", t_ref - 1, "terminal flag missing"))
        early = np.flatnonzero(dones[:-1] == 1)
        for i in early[:8]:
            out.append(Violation("dones", int(i), "done flag before final step"))

    cursor = record.tty_cursor
    if cursor.shape[0] == t_ref:
        bad_row = np.flatnonzero((cursor[:, 0] < 0) | (cursor[:, 0] >= SCREEN_ROWS))
        bad_col = np.flatnonzero((cursor[:, 1] < 0) | (cursor[:, 1] >= SCREEN_COLS))
        for i in bad_row[:8]:
            out.append(Violation("tty_cursor", int(i), f"row {int(cursor[i, 0])} outside [0, {SCREEN_ROWS})"))
        for i in bad_col[:8]:
            out.append(Violation("tty_cursor", int(i), f"col {int(cursor[i, 1])} outside [0, {SCREEN_COLS})"))

    meta = record.metadata
    if meta.final_score < 0:
        out.append(Violation("metadata", None, f"final_score {meta.final_score} < 0"))
    if meta.death_level < 1:
        out.append(Violation("metadata", None, f"death_level {meta.death_level} < 1"))
    if meta.turns < 1:
        out.append(Violation("metadata", None, f"turns {meta.turns} < 1"))

    return out
