"""Hot inner-loop kernels: window gathering and screen rasterization.

Both kernels ship in two interchangeable implementations: numba @njit loops
and pure-numpy fallbacks. The numba path is used when numba imports cleanly
and the environment variable KTB_NO_NUMBA is not set to a truthy value; the
fallback produces bit-identical output (pure element copies, no arithmetic),
which the test suite asserts. benchmarks/accel_bench.py times one against
the other.
"""

from __future__ import annotations

import os

import numpy as np

_FLAG = os.environ.get("KTB_NO_NUMBA", "").strip().lower()
_DISABLED = _FLAG in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

    def njit(*args, **kwargs):  # decorator stub so both paths always import
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


def backend() -> str:
    return "numba" if HAS_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# Window gather
#
# src is a per-step table flattened to [N, F] over the whole dataset; a batch
# row b reads `length` steps of episode e_b starting at in-episode offset
# s[b]. Steps past the episode end are clamped to the terminal step (only
# reachable under the left_clamp pad policy).
# ---------------------------------------------------------------------------

def _gather_window_2d_np(src, ep_base, start, ep_len, out):
    length = out.shape[1]
    offsets = np.arange(length)
    for b in range(out.shape[0]):
        steps = np.minimum(start[b] + offsets, ep_len[b] - 1)
        out[b] = src[ep_base[b] + steps]


@njit(cache=True)
def _gather_window_2d_jit(src, ep_base, start, ep_len, out):
    n_batch, length, width = out.shape
    for b in range(n_batch):
        base = ep_base[b]
        last = ep_len[b] - 1
        for t in range(length):
            step = start[b] + t
            if step > last:
                step = last
            row = base + step
            for j in range(width):
                out[b, t, j] = src[row, j]


def _gather_prev_actions_np(actions, ep_base, start, ep_len, out):
    length = out.shape[1]
    offsets = np.arange(length)
    for b in range(out.shape[0]):
        steps = np.minimum(start[b] + offsets, ep_len[b] - 1) - 1
        vals = actions[ep_base[b] + np.maximum(steps, 0)]
        vals[steps < 0] = 0
        out[b] = vals


@njit(cache=True)
def _gather_prev_actions_jit(actions, ep_base, start, ep_len, out):
    n_batch, length = out.shape
    for b in range(n_batch):
        base = ep_base[b]
        last = ep_len[b] - 1
        for t in range(length):
            step = start[b] + t
            if step > last:
                step = last
            step -= 1
            if step < 0:
                out[b, t] = 0
            else:
                out[b, t] = actions[base + step]


def gather_window_2d(src, ep_base, start, ep_len, out):
    if HAS_NUMBA:
        _gather_window_2d_jit(src, ep_base, start, ep_len, out)
    else:
        _gather_window_2d_np(src, ep_base, start, ep_len, out)


def gather_prev_actions(actions, ep_base, start, ep_len, out):
    if HAS_NUMBA:
        _gather_prev_actions_jit(actions, ep_base, start, ep_len, out)
    else:
        _gather_prev_actions_np(actions, ep_base, start, ep_len, out)


# ---------------------------------------------------------------------------
# Screen rasterization
#
# Paints M screens of R x C character cells into [M, 3, R*gh, C*gw] float32
# images. fg_palette maps 16 color indices to RGB; cells under the cursor are
# painted with fg/bg swapped when highlight is on. Values are straight copies
# of palette entries, so numba and numpy paths agree exactly.
# ---------------------------------------------------------------------------

@njit(cache=True)
def _paint_screens_jit(chars, colors, cursor, atlas, fg_palette, bg, highlight, out):
    n_screens, rows, cols = chars.shape
    gh = atlas.shape[1]
    gw = atlas.shape[2]
    for m in range(n_screens):
        cur_r = cursor[m, 0]
        cur_c = cursor[m, 1]
        for r in range(rows):
            for c in range(cols):
                ch = chars[m, r, c]
                idx = colors[m, r, c] & 15
                invert = highlight and r == cur_r and c == cur_c
                for gy in range(gh):
                    oy = r * gh + gy
                    for gx in range(gw):
                        ox = c * gw + gx
                        on = atlas[ch, gy, gx] != 0
                        if invert:
                            on = not on
                        for k in range(3):
                            out[m, k, oy, ox] = fg_palette[idx, k] if on else bg[k]


def _paint_screens_np(chars, colors, cursor, atlas, fg_palette, bg, highlight, out):
    n_screens, rows, cols = chars.shape
    gh, gw = atlas.shape[1], atlas.shape[2]
    on = atlas[chars].astype(bool)                      # [M, R, C, gh, gw]
    if highlight:
        m_idx = np.arange(n_screens)
        on[m_idx, cursor[:, 0], cursor[:, 1]] = ~on[m_idx, cursor[:, 0], cursor[:, 1]]
    fg = fg_palette[colors & 15]                        # [M, R, C, 3]
    bgc = np.broadcast_to(bg.astype(np.float32), fg.shape)
    pix = np.where(on[..., None], fg[:, :, :, None, None, :], bgc[:, :, :, None, None, :])
    out[:] = pix.transpose(0, 5, 1, 3, 2, 4).reshape(n_screens, 3, rows * gh, cols * gw)


def paint_screens(chars, colors, cursor, atlas, fg_palette, bg, highlight, out):
    if HAS_NUMBA:
        _paint_screens_jit(chars, colors, cursor, atlas, fg_palette, bg, highlight, out)
    else:
        _paint_screens_np(chars, colors, cursor, atlas, fg_palette, bg, highlight, out)
