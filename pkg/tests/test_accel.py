"""The numba kernels and their numpy fallbacks must agree bit for bit;
mode-equivalence guarantees downstream lean on it."""

import numpy as np
import pytest

from ktb import _accel
from ktb.font import FONT_ATLAS
from ktb.ttyrender import DEFAULT_PALETTE


def _gather_case(rng, dtype, width):
    src = rng.integers(0, 200, size=(300, width)).astype(dtype)
    ep_base = np.array([0, 50, 120], dtype=np.int64)
    ep_len = np.array([50, 70, 180], dtype=np.int64)
    starts = np.array([3, 60, 170], dtype=np.int64)  # last one needs clamping
    out = np.empty((3, 16, width), dtype=dtype)
    return src, ep_base, starts, ep_len, out


@pytest.mark.parametrize("dtype,width", [("u1", 1920), ("i1", 1920),
                                         ("i2", 2), ("i4", 1), ("u1", 1)])
def test_gather_paths_agree(rng, dtype, width):
    if not _accel.HAS_NUMBA:
        pytest.skip("numba unavailable; only one path to test")
    src, ep_base, starts, ep_len, out_jit = _gather_case(rng, dtype, width)
    out_np = out_jit.copy()
    _accel._gather_window_2d_jit(src, ep_base, starts, ep_len, out_jit)
    _accel._gather_window_2d_np(src, ep_base, starts, ep_len, out_np)
    assert np.array_equal(out_jit, out_np)


def test_gather_clamps_past_episode_end(rng):
    src = np.arange(40, dtype=np.int32).reshape(40, 1)
    ep_base = np.array([10], dtype=np.int64)
    ep_len = np.array([5], dtype=np.int64)   # episode rows 10..14
    starts = np.array([2], dtype=np.int64)
    out = np.empty((1, 6, 1), dtype=np.int32)
    _accel.gather_window_2d(src, ep_base, starts, ep_len, out)
    assert out[:, :, 0].tolist() == [[12, 13, 14, 14, 14, 14]]


def test_prev_actions_zero_before_episode_start(rng):
    actions = np.arange(1, 31, dtype=np.uint8)
    ep_base = np.array([0, 10], dtype=np.int64)
    ep_len = np.array([10, 20], dtype=np.int64)
    starts = np.array([0, 4], dtype=np.int64)
    out = np.empty((2, 5), dtype=np.uint8)
    _accel.gather_prev_actions(actions, ep_base, starts, ep_len, out)
    # row 0 starts at episode step 0: null action, then actions[0..3]
    assert out[0].tolist() == [0, 1, 2, 3, 4]
    # row 1 starts at step 4 of episode 1 (global rows 10..): prev = step 3..7
    assert out[1].tolist() == [14, 15, 16, 17, 18]


def test_prev_actions_paths_agree(rng):
    if not _accel.HAS_NUMBA:
        pytest.skip("numba unavailable")
    actions = rng.integers(0, 121, 500).astype(np.uint8)
    ep_base = np.array([0, 100, 350], dtype=np.int64)
    ep_len = np.array([100, 250, 150], dtype=np.int64)
    starts = np.array([0, 240, 10], dtype=np.int64)
    a = np.empty((3, 17), dtype=np.uint8)
    b = np.empty((3, 17), dtype=np.uint8)
    _accel._gather_prev_actions_jit(actions, ep_base, starts, ep_len, a)
    _accel._gather_prev_actions_np(actions, ep_base, starts, ep_len, b)
    assert np.array_equal(a, b)


def test_paint_paths_agree(rng):
    if not _accel.HAS_NUMBA:
        pytest.skip("numba unavailable")
    chars = rng.integers(0, 256, size=(4, 24, 80)).astype(np.uint8)
    colors = rng.integers(-128, 128, size=(4, 24, 80)).astype(np.int8)
    cursor = np.stack([rng.integers(0, 24, 4), rng.integers(0, 80, 4)],
                      axis=1).astype(np.int64)
    palette = (np.asarray(DEFAULT_PALETTE, dtype=np.float32) / np.float32(255.0))
    fg = palette.copy()
    fg[0] = palette[7]
    bg = palette[0].copy()
    for highlight in (False, True):
        a = np.empty((4, 3, 24 * 6, 80 * 4), dtype=np.float32)
        b = np.empty_like(a)
        _accel._paint_screens_jit(chars, colors, cursor, FONT_ATLAS, fg, bg,
                                  highlight, a)
        _accel._paint_screens_np(chars, colors, cursor, FONT_ATLAS, fg, bg,
                                 highlight, b)
        assert np.array_equal(a, b)
