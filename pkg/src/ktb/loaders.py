"""Serve aligned sequence windows from a store under three speed/memory modes.

    in_memory   decompress every field into RAM once, sample from arrays
    memmap      decompress once to a ".decompressed" sibling file; batches
                read the screen payload from it with positional I/O (the
                small integer fields are cached at open, ~0.2% of the
                bytes); close() deletes the artifact
    compressed  decompress the touched episodes on every access (cheap to
                open, slow to sample; debugging mode)

All three modes run the same window arithmetic over the same bytes, so equal
seeds give bit-identical batches; the loader benchmark quantifies the price
of each mode.

A window of length L carries L+1 observations: position L exists only to
bootstrap the TD target of position L-1, so none of the L training tuples is
wasted. Window starts range over [0, T-1-L]; episodes are drawn with
probability proportional to their admissible start count, which makes the
draw uniform over all windows in the dataset. The draw sequence is two
SplitMix64 draws per batch row (episode via cumulative-weight search, then
start), exactly as documented in docs/sampling.md so bindings can reproduce
it.
"""

from __future__ import annotations

import enum
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .episode import FIELD_SPECS
from .errors import (AllEpisodesTooShort, DoubleClose, EmptyDataset,
                     InsufficientMemory, IoError, UseAfterClose)
from .prng import SplitMix64
from .store import StoreHandle, open_store

OBS_FIELDS = ("tty_chars", "tty_colors", "tty_cursor")
STEP_FIELDS = ("actions", "rewards", "dones")


class LoaderMode(enum.Enum):
    IN_MEMORY = "in_memory"
    MEMMAP = "memmap"
    COMPRESSED = "compressed"


@dataclass(frozen=True)
class SamplerConfig:
    batch_size: int
    seq_len: int
    seed: int = 0
    pad_policy: str = "reject_short"  # or "left_clamp"

    def __post_init__(self):
        if self.batch_size < 1 or self.seq_len < 1:
            raise ValueError("batch_size and seq_len must be >= 1")
        if self.pad_policy not in ("reject_short", "left_clamp"):
            raise ValueError(f"unknown pad_policy {self.pad_policy!r}")


@dataclass
class SequenceBatch:
    tty_chars: np.ndarray    # [B, L+1, 24, 80] u1
    tty_colors: np.ndarray   # [B, L+1, 24, 80] i1
    tty_cursor: np.ndarray   # [B, L+1, 2] i2
    prev_actions: np.ndarray  # [B, L+1] u1, 0 before episode start
    actions: np.ndarray      # [B, L] u1
    rewards: np.ndarray      # [B, L] i4
    dones: np.ndarray        # [B, L] u1
    pad_mask: np.ndarray     # [B, L] u1, 1 = real tuple, 0 = terminal padding
    episode_ids: np.ndarray  # [B] i8
    offsets: np.ndarray      # [B] i8, window start within the episode

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "tty_chars": self.tty_chars, "tty_colors": self.tty_colors,
            "tty_cursor": self.tty_cursor, "prev_actions": self.prev_actions,
            "actions": self.actions, "rewards": self.rewards,
            "dones": self.dones, "pad_mask": self.pad_mask,
            "episode_ids": self.episode_ids, "offsets": self.offsets,
        }


@dataclass
class CleanupReport:
    mode: LoaderMode
    freed_bytes: int
    deleted_paths: list[str] = field(default_factory=list)


def _mem_available_bytes() -> int | None:
    try:
        with open("/proc/meminfo") as f:
            for line in f:
                if line.startswith("MemAvailable:"):
                    return int(line.split()[1]) * 1024
    except OSError:
        pass
    return None


def _field_nbytes_per_step(name: str) -> int:
    dtype, shape = FIELD_SPECS[name]
    return int(np.dtype(dtype).itemsize * int(np.prod(shape, dtype=np.int64)))


class DatasetHandle:
    """One opened store under a chosen loader mode.

    `arrays` holds the fields resident in RAM as flat [total_T, ...] views:
    all six under in_memory, only the small integer fields under memmap
    (screens come from the artifact by positional reads), none under
    compressed.
    """

    def __init__(self, store: StoreHandle, mode: LoaderMode,
                 arrays: dict[str, np.ndarray] | None,
                 artifact_path: str | None, artifact_fd: int = -1,
                 field_regions: dict[str, int] | None = None):
        self.store = store
        self.mode = mode
        self.arrays = arrays or {}
        self.artifact_path = artifact_path
        self._artifact_fd = artifact_fd
        self._field_regions = field_regions or {}
        self.episode_lengths = store.episode_lengths
        self.episode_offsets = np.concatenate(
            ([0], np.cumsum(self.episode_lengths)))[:-1].astype(np.int64)
        self.total_transitions = int(self.episode_lengths.sum())
        self.closed = False
        self._episode_cache: tuple[int, dict[str, np.ndarray]] | None = None

    @property
    def episode_count(self) -> int:
        return int(self.episode_lengths.shape[0])

    def _check_open(self):
        if self.closed:
            raise UseAfterClose(f"dataset {self.store.path} is closed")

    def read_artifact_steps(self, name: str, global_step: int, count: int,
                            out: np.ndarray | None = None) -> np.ndarray:
        """`count` consecutive steps of one field from the artifact."""
        dtype, shape = FIELD_SPECS[name]
        sb = _field_nbytes_per_step(name)
        if out is None:
            out = np.empty((count,) + shape, dtype=np.dtype(dtype))
        view = memoryview(out).cast("B")
        offset = self._field_regions[name] + global_step * sb
        done = 0
        while done < len(view):
            n = os.preadv(self._artifact_fd, [view[done:]], offset + done)
            if n <= 0:
                raise IoError(f"artifact read failed for {name}")
            done += n
        return out

    def episode_arrays(self, idx: int) -> dict[str, np.ndarray]:
        """All six fields of one episode, decompressing if necessary."""
        self._check_open()
        lo = int(self.episode_offsets[idx])
        t = int(self.episode_lengths[idx])
        if self.mode is not LoaderMode.COMPRESSED:
            out = {}
            for name in FIELD_SPECS:
                if name in self.arrays:
                    out[name] = self.arrays[name][lo:lo + t]
                else:
                    out[name] = self.read_artifact_steps(name, lo, t)
            return out
        if self._episode_cache is not None and self._episode_cache[0] == idx:
            return self._episode_cache[1]
        fields = {name: self.store.read_field(idx, name) for name in FIELD_SPECS}
        self._episode_cache = (idx, fields)
        return fields

    def sampler(self, cfg: SamplerConfig) -> "SequenceSampler":
        self._check_open()
        return SequenceSampler(self, cfg)

    def close(self) -> CleanupReport:
        return close(self)


def load(store_path: str | os.PathLike, mode: LoaderMode | str) -> DatasetHandle:
    """Open a store under a loader mode; see module docstring for tradeoffs."""
    mode = LoaderMode(mode) if not isinstance(mode, LoaderMode) else mode
    store = open_store(store_path)
    try:
        if store.episode_count == 0:
            raise EmptyDataset(f"{store_path} has no episodes")
        if mode is LoaderMode.COMPRESSED:
            return DatasetHandle(store, mode, None, None)

        lengths = store.episode_lengths
        total = int(lengths.sum())
        required = sum(_field_nbytes_per_step(n) * total for n in FIELD_SPECS)

        if mode is LoaderMode.IN_MEMORY:
            available = _mem_available_bytes()
            if available is not None and required > available:
                raise InsufficientMemory(required, available)
            arrays = {}
            for name in FIELD_SPECS:
                dtype, shape = FIELD_SPECS[name]
                arrays[name] = np.empty((total,) + shape, dtype=np.dtype(dtype))
            offsets = np.concatenate(([0], np.cumsum(lengths)))
            for e in range(store.episode_count):
                lo, hi = offsets[e], offsets[e + 1]
                for name in FIELD_SPECS:
                    arrays[name][lo:hi] = store.read_field(e, name)
            return DatasetHandle(store, mode, arrays, None)

        # memmap: materialize the decompressed artifact once; keep the tiny
        # integer fields hot, read screen payload positionally per batch
        artifact = str(store_path) + ".decompressed"
        _ensure_artifact(store, artifact, total)
        regions = {}
        region = 0
        for name in FIELD_SPECS:
            regions[name] = region
            region += _field_nbytes_per_step(name) * total
        fd = os.open(artifact, os.O_RDONLY)
        handle = DatasetHandle(store, mode, None, artifact, artifact_fd=fd,
                               field_regions=regions)
        arrays = {}
        for name in ("tty_cursor", "actions", "rewards", "dones"):
            arrays[name] = handle.read_artifact_steps(name, 0, total)
        handle.arrays = arrays
        return handle
    except Exception:
        store.close()
        raise


def _ensure_artifact(store: StoreHandle, artifact: str, total_steps: int):
    """Write the field-major decompressed artifact, guarded by a lockfile so
    concurrent loads of one store decompress exactly once."""
    expected = sum(_field_nbytes_per_step(n) * total_steps for n in FIELD_SPECS)
    if os.path.exists(artifact) and os.path.getsize(artifact) == expected:
        return
    lock = artifact + ".lock"
    deadline = time.monotonic() + 600.0
    while True:
        try:
            fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            break
        except FileExistsError:
            if time.monotonic() > deadline:
                raise IoError(f"timed out waiting for {lock}")
            time.sleep(0.05)
            if os.path.exists(artifact) and os.path.getsize(artifact) == expected:
                return
    try:
        tmp = artifact + ".tmp"
        with open(tmp, "wb") as f:
            for name in FIELD_SPECS:
                for e in range(store.episode_count):
                    f.write(store.read_block(e, name))
        os.replace(tmp, artifact)
    finally:
        os.close(fd)
        os.unlink(lock)


class SequenceSampler:
    """Seeded window sampler over one dataset handle.

    Draw sequence per batch row: one bounded draw to pick the episode by
    cumulative window count, one bounded draw for the start. Short episodes
    (T < L+1) are rejected under reject_short and get a single clamped
    window under left_clamp.
    """

    def __init__(self, handle: DatasetHandle, cfg: SamplerConfig):
        self.handle = handle
        self.cfg = cfg
        self.prng = SplitMix64(cfg.seed)
        self.calls = 0

        lengths = handle.episode_lengths
        if lengths.size == 0:
            raise EmptyDataset("no episodes to sample from")
        full = np.maximum(lengths - cfg.seq_len, 0)
        if cfg.pad_policy == "left_clamp":
            weights = np.maximum(full, 1)
        else:
            weights = full
        if int(weights.sum()) == 0:
            raise AllEpisodesTooShort(
                f"no episode admits a window of length {cfg.seq_len} "
                f"(need T >= {cfg.seq_len + 1})")
        if int(lengths.max()) < 2:
            raise AllEpisodesTooShort("no episode has at least 2 steps")
        self._weights = weights.astype(np.int64)
        self._cum = np.cumsum(self._weights)
        self._total = int(self._cum[-1])

    def _draw_rows(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        episodes = np.empty(n, dtype=np.int64)
        starts = np.empty(n, dtype=np.int64)
        lengths = self.handle.episode_lengths
        for b in range(n):
            r = self.prng.bounded(self._total)
            e = int(np.searchsorted(self._cum, r, side="right"))
            n_starts = max(int(lengths[e]) - self.cfg.seq_len, 1)
            episodes[b] = e
            starts[b] = self.prng.bounded(n_starts)
        return episodes, starts

    def sample(self) -> SequenceBatch:
        self.handle._check_open()
        episodes, starts = self._draw_rows(self.cfg.batch_size)
        self.calls += 1
        return _assemble(self.handle, episodes, starts, self.cfg.seq_len)


def _assemble(handle: DatasetHandle, episodes: np.ndarray, starts: np.ndarray,
              seq_len: int) -> SequenceBatch:
    b = episodes.shape[0]
    l = seq_len
    lengths = handle.episode_lengths[episodes]
    out = {
        "tty_chars": np.empty((b, l + 1, 24, 80), dtype=np.uint8),
        "tty_colors": np.empty((b, l + 1, 24, 80), dtype=np.int8),
        "tty_cursor": np.empty((b, l + 1, 2), dtype=np.int16),
        "prev_actions": np.empty((b, l + 1), dtype=np.uint8),
        "actions": np.empty((b, l), dtype=np.uint8),
        "rewards": np.empty((b, l), dtype=np.int32),
        "dones": np.empty((b, l), dtype=np.uint8),
    }

    if handle.mode is not LoaderMode.COMPRESSED:
        ep_base = handle.episode_offsets[episodes]
        for name in OBS_FIELDS + STEP_FIELDS:
            window = l + 1 if name in OBS_FIELDS else l
            if name in handle.arrays:
                src = handle.arrays[name]
                flat = src.reshape(src.shape[0], -1)
                dst = out[name].reshape(b, window, -1)
                _accel.gather_window_2d(flat, ep_base, starts, lengths, dst)
            else:
                for i in range(b):
                    contig = min(window, int(lengths[i]) - int(starts[i]))
                    handle.read_artifact_steps(
                        name, int(ep_base[i] + starts[i]), contig,
                        out=out[name][i, :contig])
                    for pad in range(contig, window):
                        out[name][i, pad] = out[name][i, contig - 1]
        _accel.gather_prev_actions(handle.arrays["actions"], ep_base, starts,
                                   lengths, out["prev_actions"])
    else:
        offsets = np.arange(l + 1)
        for i in range(b):
            ep = handle.episode_arrays(int(episodes[i]))
            t_last = int(lengths[i]) - 1
            steps = np.minimum(starts[i] + offsets, t_last)
            for name in OBS_FIELDS:
                out[name][i] = ep[name][steps]
            for name in STEP_FIELDS:
                out[name][i] = ep[name][steps[:l]]
            prev_steps = steps - 1
            prev = ep["actions"][np.maximum(prev_steps, 0)]
            prev[prev_steps < 0] = 0
            out["prev_actions"][i] = prev

    step_idx = starts[:, None] + np.arange(l)[None, :]
    pad_mask = (step_idx <= (lengths - 1)[:, None]).astype(np.uint8)
    return SequenceBatch(episode_ids=episodes.copy(), offsets=starts.copy(),
                         pad_mask=pad_mask, **out)


def sample_sequences(handle: DatasetHandle, cfg: SamplerConfig) -> SequenceBatch:
    """One batch from a fresh sampler: fully determined by (dataset, cfg)."""
    return handle.sampler(cfg).sample()


def iterate_epoch(handle: DatasetHandle, cfg: SamplerConfig):
    """ceil(total_transitions / (B*L)) batches from one seeded sampler."""
    sampler = handle.sampler(cfg)
    n_batches = math.ceil(handle.total_transitions / (cfg.batch_size * cfg.seq_len))
    for _ in range(n_batches):
        yield sampler.sample()


def close(handle: DatasetHandle) -> CleanupReport:
    """Release resources; for memmap, delete the decompressed artifact (the
    compressed store is never touched)."""
    if handle.closed:
        raise DoubleClose(f"dataset {handle.store.path} closed twice")
    freed = 0
    deleted = []
    if handle.mode is LoaderMode.IN_MEMORY:
        freed = sum(a.nbytes for a in handle.arrays.values())
    elif handle.mode is LoaderMode.MEMMAP:
        try:
            freed = os.path.getsize(handle.artifact_path)
        except OSError:
            freed = 0
        if handle._artifact_fd >= 0:
            os.close(handle._artifact_fd)
            handle._artifact_fd = -1
        try:
            os.unlink(handle.artifact_path)
            deleted.append(handle.artifact_path)
        except OSError:
            pass
    handle.arrays = {}
    handle._episode_cache = None
    handle.closed = True
    handle.store.close()
    return CleanupReport(mode=handle.mode, freed_bytes=freed, deleted_paths=deleted)


# ---------------------------------------------------------------------------
# Loader benchmark
# ---------------------------------------------------------------------------

@dataclass
class BenchRow:
    mode: str
    batch_size: int
    seq_len: int
    mean_ms: float
    iterations: int


def _evict_page_cache(path: str):
    try:
        fd = os.open(path, os.O_RDONLY)
        try:
            os.posix_fadvise(fd, 0, 0, os.POSIX_FADV_DONTNEED)
        finally:
            os.close(fd)
    except (OSError, AttributeError):
        pass


def benchmark_loader(store_path: str | os.PathLike,
                     modes=("in_memory", "memmap", "compressed"),
                     configs=((64, 16), (256, 32), (256, 64)),
                     iterations: int = 500, warmup: int = 10, seed: int = 0,
                     evict_page_cache: bool = True) -> list[BenchRow]:
    """Mean per-batch latency per (mode, batch, seq) cell.

    Warmup draws run first (they also absorb kernel compilation); for the
    memmap mode the artifact's pages are then dropped from the OS cache when
    the platform allows it, to measure disk-backed reads the way a
    bigger-than-RAM dataset would behave.
    """
    rows = []
    for mode in modes:
        mode = LoaderMode(mode)
        handle = load(store_path, mode)
        try:
            for batch_size, seq_len in configs:
                sampler = handle.sampler(SamplerConfig(batch_size, seq_len, seed=seed))
                for _ in range(warmup):
                    sampler.sample()
                if evict_page_cache and mode is LoaderMode.MEMMAP and handle.artifact_path:
                    _evict_page_cache(handle.artifact_path)
                t0 = time.perf_counter()
                for _ in range(iterations):
                    sampler.sample()
                elapsed = time.perf_counter() - t0
                rows.append(BenchRow(mode.value, batch_size, seq_len,
                                     elapsed * 1000.0 / iterations, iterations))
        finally:
            close(handle)
    return rows


def benchmark_table_csv(rows: list[BenchRow]) -> str:
    """Wide CSV: one row per (batch, seq) variant, one column per mode."""
    modes = []
    for r in rows:
        if r.mode not in modes:
            modes.append(r.mode)
    variants = []
    for r in rows:
        key = (r.batch_size, r.seq_len)
        if key not in variants:
            variants.append(key)
    cells = {(r.batch_size, r.seq_len, r.mode): r.mean_ms for r in rows}
    lines = ["variant," + ",".join(f"{m}_ms" for m in modes)]
    for batch_size, seq_len in variants:
        vals = [f"{cells.get((batch_size, seq_len, m), float('nan')):.3f}" for m in modes]
        lines.append(f"batch_size={batch_size} seq_len={seq_len}," + ",".join(vals))
    return "\n".join(lines) + "\n"
