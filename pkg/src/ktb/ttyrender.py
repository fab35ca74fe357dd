"""Rasterize terminal screens (chars + colors + cursor) into image tensors.

This is the fixed front end of the policy encoder: glyphs come from the
embedded 4x6 font, colors from a 16-entry palette, and the output is a
float32 [3, H, W] tensor in [0, 1]. Rendering is a pure function of its
inputs; the accelerated kernel and the numpy fallback agree bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _accel
from .catalog import SCREEN_COLS, SCREEN_ROWS
from .font import FONT_ATLAS, GLYPH_HEIGHT, GLYPH_WIDTH

# Classic 16-color terminal palette (indices follow the curses convention:
# 0 black, 1 red, 2 green, 3 yellow/brown, 4 blue, 5 magenta, 6 cyan,
# 7 light gray, 8..15 bright variants).
DEFAULT_PALETTE: tuple[tuple[int, int, int], ...] = (
    (0, 0, 0), (170, 0, 0), (0, 170, 0), (170, 85, 0),
    (0, 0, 170), (170, 0, 170), (0, 170, 170), (170, 170, 170),
    (85, 85, 85), (255, 85, 85), (85, 255, 85), (255, 255, 85),
    (85, 85, 255), (255, 85, 255), (85, 255, 255), (255, 255, 255),
)


@dataclass(frozen=True)
class RenderSpec:
    glyph_height: int = GLYPH_HEIGHT
    glyph_width: int = GLYPH_WIDTH
    crop_rows: int = 0   # 0 = full screen; odd when nonzero
    crop_cols: int = 0
    palette: tuple[tuple[int, int, int], ...] = DEFAULT_PALETTE
    cursor_highlight: bool = True

    def __post_init__(self):
        if self.glyph_height < 1 or self.glyph_width < 1:
            raise ValueError("glyph dimensions must be >= 1")
        for name, v in (("crop_rows", self.crop_rows), ("crop_cols", self.crop_cols)):
            if v < 0 or (v != 0 and v % 2 == 0):
                raise ValueError(f"{name} must be 0 or odd, got {v}")
        if len(self.palette) != 16:
            raise ValueError("palette must have exactly 16 entries")

    @property
    def cell_rows(self) -> int:
        return self.crop_rows or SCREEN_ROWS

    @property
    def cell_cols(self) -> int:
        return self.crop_cols or SCREEN_COLS

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return (3, self.cell_rows * self.glyph_height, self.cell_cols * self.glyph_width)


@lru_cache(maxsize=8)
def _tables(spec: RenderSpec):
    gh, gw = spec.glyph_height, spec.glyph_width
    # Nearest-neighbor center sampling, integer-exact so foreign
    # implementations reproduce it: src = ((2i + 1) * native) // (2 * scaled).
    ys = [((2 * y + 1) * GLYPH_HEIGHT) // (2 * gh) for y in range(gh)]
    xs = [((2 * x + 1) * GLYPH_WIDTH) // (2 * gw) for x in range(gw)]
    atlas = np.ascontiguousarray(FONT_ATLAS[:, ys][:, :, xs])
    palette = np.asarray(spec.palette, dtype=np.float32) / np.float32(255.0)
    fg = palette.copy()
    fg[0] = palette[7]  # color 0 is "default text", not black-on-black
    bg = palette[0].copy()
    return atlas, fg, bg


def _crop_cells(chars, colors, cursor, rows, cols):
    """Cut a rows x cols cell window centered on the cursor; off-screen
    cells are background (space, color 0). Returns grids plus the cursor
    position in window coordinates (always the center)."""
    m = chars.shape[0]
    half_r, half_c = rows // 2, cols // 2
    out_ch = np.full((m, rows, cols), 32, dtype=np.uint8)
    out_co = np.zeros((m, rows, cols), dtype=np.int8)
    for i in range(m):
        r0 = int(cursor[i, 0]) - half_r
        c0 = int(cursor[i, 1]) - half_c
        sr0, sr1 = max(r0, 0), min(r0 + rows, SCREEN_ROWS)
        sc0, sc1 = max(c0, 0), min(c0 + cols, SCREEN_COLS)
        if sr0 < sr1 and sc0 < sc1:
            dr0, dc0 = sr0 - r0, sc0 - c0
            out_ch[i, dr0:dr0 + (sr1 - sr0), dc0:dc0 + (sc1 - sc0)] = chars[i, sr0:sr1, sc0:sc1]
            out_co[i, dr0:dr0 + (sr1 - sr0), dc0:dc0 + (sc1 - sc0)] = colors[i, sr0:sr1, sc0:sc1]
    out_cursor = np.empty((m, 2), dtype=np.int64)
    out_cursor[:, 0] = half_r
    out_cursor[:, 1] = half_c
    return out_ch, out_co, out_cursor


def render_many(chars: np.ndarray, colors: np.ndarray, cursor: np.ndarray,
                spec: RenderSpec) -> np.ndarray:
    """Render a stack of screens [M, 24, 80] to images [M, 3, H, W]."""
    chars = np.ascontiguousarray(chars, dtype=np.uint8)
    colors = np.ascontiguousarray(colors, dtype=np.int8)
    cursor = np.ascontiguousarray(cursor, dtype=np.int64)
    if spec.crop_rows or spec.crop_cols:
        chars, colors, cursor = _crop_cells(chars, colors, cursor,
                                            spec.cell_rows, spec.cell_cols)
    atlas, fg, bg = _tables(spec)
    out = np.empty((chars.shape[0],) + spec.image_shape, dtype=np.float32)
    _accel.paint_screens(chars, colors, cursor, atlas, fg, bg,
                         spec.cursor_highlight, out)
    return out


def render_screen(chars: np.ndarray, colors: np.ndarray, cursor,
                  spec: RenderSpec = RenderSpec()) -> np.ndarray:
    """Render one screen to a [3, H, W] float32 image in [0, 1]."""
    cur = np.asarray(cursor, dtype=np.int64).reshape(1, 2)
    return render_many(chars[None], colors[None], cur, spec)[0]


def render_batch(chars: np.ndarray, colors: np.ndarray, cursor: np.ndarray,
                 spec: RenderSpec = RenderSpec()) -> np.ndarray:
    """Render [B, T, 24, 80] observation windows to [B, T, 3, H, W]."""
    b, t = chars.shape[:2]
    flat = render_many(chars.reshape(b * t, SCREEN_ROWS, SCREEN_COLS),
                       colors.reshape(b * t, SCREEN_ROWS, SCREEN_COLS),
                       cursor.reshape(b * t, 2), spec)
    return flat.reshape(b, t, *spec.image_shape)


def to_png_bytes(image: np.ndarray) -> bytes:
    """Encode a [3, H, W] float image in [0, 1] as an 8-bit RGB PNG."""
    import struct
    import zlib

    rgb = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    rgb = rgb.transpose(1, 2, 0)  # [H, W, 3]
    h, w = rgb.shape[:2]
    raw = b"".join(b"\x00" + rgb[y].tobytes() for y in range(h))

    def chunk(tag: bytes, payload: bytes) -> bytes:
        body = tag + payload
        return struct.pack(">I", len(payload)) + body + struct.pack(">I", zlib.crc32(body))

    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return (b"\x89PNG\r\n\x1a\n"
            + chunk(b"IHDR", ihdr)
            + chunk(b"IDAT", zlib.compress(raw, 6))
            + chunk(b"IEND", b""))
