import math
import os

import numpy as np
import pytest

from conftest import synthetic_episodes
from ktb.errors import AllEpisodesTooShort, DoubleClose, UseAfterClose
from ktb.loaders import (SamplerConfig, benchmark_loader,
                         benchmark_table_csv, close, iterate_epoch, load,
                         sample_sequences)
from ktb.store import open_store, store_checksum, write_store

ALL_MODES = ("in_memory", "memmap", "compressed")


def _batch_equal(a, b) -> bool:
    return all(np.array_equal(x, y)
               for (_, x), (_, y) in zip(sorted(a.arrays().items()),
                                         sorted(b.arrays().items())))


def test_shapes_and_dtypes(gridhack_store):
    handle = load(gridhack_store, "in_memory")
    batch = sample_sequences(handle, SamplerConfig(8, 16, seed=3))
    assert batch.tty_chars.shape == (8, 17, 24, 80)
    assert batch.tty_chars.dtype == np.uint8
    assert batch.tty_colors.shape == (8, 17, 24, 80)
    assert batch.tty_cursor.shape == (8, 17, 2)
    assert batch.tty_cursor.dtype == np.int16
    assert batch.prev_actions.shape == (8, 17)
    assert batch.actions.shape == (8, 16)
    assert batch.rewards.dtype == np.int32
    assert batch.dones.shape == (8, 16)
    assert batch.pad_mask.all()
    close(handle)


def test_modes_bit_identical(gridhack_store):
    handles = [load(gridhack_store, m) for m in ALL_MODES]
    try:
        samplers = [h.sampler(SamplerConfig(6, 12, seed=99)) for h in handles]
        for _ in range(5):
            batches = [s.sample() for s in samplers]
            assert _batch_equal(batches[0], batches[1])
            assert _batch_equal(batches[0], batches[2])
    finally:
        for h in handles:
            close(h)


def test_windows_match_store_content(gridhack_store):
    """Every sampled window must be a verbatim slice of its episode."""
    with open_store(gridhack_store) as sh:
        episodes = [sh.read_episode(i) for i in range(sh.episode_count)]
    handle = load(gridhack_store, "in_memory")
    batch = sample_sequences(handle, SamplerConfig(16, 8, seed=17))
    for b in range(16):
        ep = episodes[int(batch.episode_ids[b])]
        s = int(batch.offsets[b])
        assert np.array_equal(batch.tty_chars[b], ep.tty_chars[s:s + 9])
        assert np.array_equal(batch.actions[b], ep.actions[s:s + 8])
        assert np.array_equal(batch.rewards[b], ep.rewards[s:s + 8])
        assert np.array_equal(batch.tty_cursor[b], ep.tty_cursor[s:s + 9])
        # bootstrap tail is exactly step s+L
        assert np.array_equal(batch.tty_chars[b, 8], ep.tty_chars[s + 8])
        if s == 0:
            assert batch.prev_actions[b, 0] == 0
        else:
            assert batch.prev_actions[b, 0] == ep.actions[s - 1]
        assert np.array_equal(batch.prev_actions[b, 1:], ep.actions[s:s + 8])
    close(handle)


def test_single_admissible_window_repeats():
    import tempfile
    episodes = synthetic_episodes(seed=12, count=1, min_len=17, max_len=17)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "one.ktb")
        write_store(path, episodes)
        handle = load(path, "in_memory")
        batch = sample_sequences(handle, SamplerConfig(4, 16, seed=0))
        assert batch.offsets.tolist() == [0, 0, 0, 0]
        assert batch.episode_ids.tolist() == [0, 0, 0, 0]
        close(handle)


def test_windows_never_cross_episodes(gridhack_store):
    handle = load(gridhack_store, "in_memory")
    lengths = handle.episode_lengths
    sampler = handle.sampler(SamplerConfig(32, 16, seed=5))
    for _ in range(10):
        batch = sampler.sample()
        for b in range(32):
            t_len = int(lengths[batch.episode_ids[b]])
            assert 0 <= batch.offsets[b] <= t_len - 1 - 16
            assert not batch.dones[b].any()  # terminal step is never a tuple
    close(handle)


def test_coverage_of_all_training_steps(tmp_path):
    """With reject_short, every step index in [0, T-1) of every episode is
    reachable by some admissible window (exhaustive on a 3-episode store)."""
    episodes = synthetic_episodes(seed=13, count=3, min_len=6, max_len=12)
    path = tmp_path / "cov.ktb"
    write_store(path, episodes)
    handle = load(path, "in_memory")
    seq_len = 4
    covered = {e: set() for e in range(3)}
    for e, t_len in enumerate(handle.episode_lengths):
        for start in range(int(t_len) - seq_len):
            for t in range(seq_len):
                idx = start + t
                assert idx < t_len - 1
                covered[e].add(idx)
    for e, t_len in enumerate(handle.episode_lengths):
        assert covered[e] == set(range(int(t_len) - 1))
    close(handle)


def test_reject_short_raises_when_nothing_fits(tmp_path):
    episodes = synthetic_episodes(seed=14, count=3, min_len=3, max_len=5)
    path = tmp_path / "short.ktb"
    write_store(path, episodes)
    handle = load(path, "compressed")
    with pytest.raises(AllEpisodesTooShort):
        handle.sampler(SamplerConfig(2, 10, seed=0))
    close(handle)


def test_left_clamp_pads_with_terminal_repetition(tmp_path):
    episodes = synthetic_episodes(seed=15, count=1, min_len=4, max_len=4)
    path = tmp_path / "clamp.ktb"
    write_store(path, episodes)
    handle = load(path, "in_memory")
    batch = sample_sequences(handle, SamplerConfig(2, 6, seed=0,
                                                   pad_policy="left_clamp"))
    ep = episodes[0]
    assert batch.offsets.tolist() == [0, 0]
    assert batch.pad_mask[0].tolist() == [1, 1, 1, 1, 0, 0]   # T=4 real tuples
    for t in range(7):
        step = min(t, 3)
        assert np.array_equal(batch.tty_chars[0, t], ep.tty_chars[step])
    assert batch.dones[0].tolist() == [0, 0, 0, 1, 1, 1]
    close(handle)


def test_epoch_batch_count(gridhack_store):
    handle = load(gridhack_store, "compressed")
    cfg = SamplerConfig(8, 16, seed=1)
    batches = list(iterate_epoch(handle, cfg))
    assert len(batches) == math.ceil(handle.total_transitions / (8 * 16))
    close(handle)


def test_close_semantics(gridhack_store):
    handle = load(gridhack_store, "memmap")
    artifact = handle.artifact_path
    assert os.path.exists(artifact)
    report = close(handle)
    assert not os.path.exists(artifact)
    assert report.freed_bytes > 0
    assert report.deleted_paths == [artifact]
    with pytest.raises(DoubleClose):
        close(handle)
    with pytest.raises(UseAfterClose):
        sample_sequences(handle, SamplerConfig(2, 4, seed=0))
    # compressed store untouched: reopen works
    handle2 = load(gridhack_store, "compressed")
    sample_sequences(handle2, SamplerConfig(2, 4, seed=0))
    close(handle2)


def test_in_memory_close_frees_decompressed_size(gridhack_store):
    handle = load(gridhack_store, "in_memory")
    expected = sum(a.nbytes for a in handle.arrays.values())
    report = close(handle)
    assert report.freed_bytes == expected
    assert report.deleted_paths == []


def test_memmap_artifact_reused_between_loads(gridhack_store):
    h1 = load(gridhack_store, "memmap")
    artifact = h1.artifact_path
    mtime = os.path.getmtime(artifact)
    h2 = load(gridhack_store, "memmap")
    assert os.path.getmtime(artifact) == mtime  # no re-decompression
    close(h1)
    report = close(h2)  # artifact already gone; close stays clean
    assert report.deleted_paths == []


def test_checksums_prove_mode_equality(gridhack_store):
    with open_store(gridhack_store) as h:
        digests = store_checksum(h)
    assert len(set(digests)) == len(digests)  # distinct episodes
    handles = [load(gridhack_store, m) for m in ALL_MODES]
    try:
        for e in range(3):
            eps = [h.episode_arrays(e) for h in handles]
            for name in eps[0]:
                assert np.array_equal(eps[0][name], eps[1][name])
                assert np.array_equal(eps[0][name], eps[2][name])
    finally:
        for h in handles:
            close(h)


def test_benchmark_emits_table_rows(gridhack_store):
    rows = benchmark_loader(gridhack_store, modes=("in_memory", "compressed"),
                            configs=((4, 8),), iterations=3, warmup=1)
    assert len(rows) == 2
    csv = benchmark_table_csv(rows)
    assert csv.splitlines()[0] == "variant,in_memory_ms,compressed_ms"
    assert "batch_size=4 seq_len=8" in csv
