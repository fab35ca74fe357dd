/**
 * TTY screen rasterization mirroring the engine: embedded 4x6 font scaled
 * by integer-exact center sampling, 16-color palette (index 0 renders as
 * the light-gray terminal default), optional cursor-cell inversion and a
 * cursor-centered crop. Output is float32 [3, H, W] in [0, 1], bit-equal
 * to the engine's because values are plain palette copies.
 */

import { FONT_ATLAS, GLYPH_HEIGHT, GLYPH_WIDTH } from "./font.js";

export const SCREEN_ROWS = 24;
export const SCREEN_COLS = 80;

export const DEFAULT_PALETTE: ReadonlyArray<readonly [number, number, number]> = [
  [0, 0, 0], [170, 0, 0], [0, 170, 0], [170, 85, 0],
  [0, 0, 170], [170, 0, 170], [0, 170, 170], [170, 170, 170],
  [85, 85, 85], [255, 85, 85], [85, 255, 85], [255, 255, 85],
  [85, 85, 255], [255, 85, 255], [85, 255, 255], [255, 255, 255],
];

export interface RenderSpec {
  glyphHeight?: number;
  glyphWidth?: number;
  cropRows?: number;   // 0 = full screen, otherwise odd
  cropCols?: number;
  cursorHighlight?: boolean;
}

function scaledAtlas(gh: number, gw: number): Uint8Array {
  const atlas = new Uint8Array(256 * gh * gw);
  for (let code = 0; code < 256; code++) {
    for (let y = 0; y < gh; y++) {
      const sy = Math.floor(((2 * y + 1) * GLYPH_HEIGHT) / (2 * gh));
      for (let x = 0; x < gw; x++) {
        const sx = Math.floor(((2 * x + 1) * GLYPH_WIDTH) / (2 * gw));
        atlas[(code * gh + y) * gw + x] =
          FONT_ATLAS[(code * GLYPH_HEIGHT + sy) * GLYPH_WIDTH + sx];
      }
    }
  }
  return atlas;
}

export interface RenderedImage {
  data: Float32Array;        // [3, H, W], C-order
  height: number;
  width: number;
}

export function renderScreen(chars: Uint8Array, colors: Int8Array,
                             cursor: readonly [number, number],
                             spec: RenderSpec = {}): RenderedImage {
  const gh = spec.glyphHeight ?? GLYPH_HEIGHT;
  const gw = spec.glyphWidth ?? GLYPH_WIDTH;
  const cropR = spec.cropRows ?? 0;
  const cropC = spec.cropCols ?? 0;
  const highlight = spec.cursorHighlight ?? true;
  if (gh < 1 || gw < 1) throw new RangeError("glyph dims must be >= 1");
  if (cropR < 0 || (cropR !== 0 && cropR % 2 === 0)
      || cropC < 0 || (cropC !== 0 && cropC % 2 === 0)) {
    throw new RangeError("crop dims must be 0 or odd");
  }

  const rows = cropR || SCREEN_ROWS;
  const cols = cropC || SCREEN_COLS;
  let grid = chars;
  let cgrid = colors;
  let [curR, curC] = cursor;
  if (cropR || cropC) {
    const gOut = new Uint8Array(rows * cols).fill(32);
    const cOut = new Int8Array(rows * cols);
    const r0 = cursor[0] - (rows >> 1);
    const c0 = cursor[1] - (cols >> 1);
    for (let r = 0; r < rows; r++) {
      const sr = r0 + r;
      if (sr < 0 || sr >= SCREEN_ROWS) continue;
      for (let c = 0; c < cols; c++) {
        const sc = c0 + c;
        if (sc < 0 || sc >= SCREEN_COLS) continue;
        gOut[r * cols + c] = chars[sr * SCREEN_COLS + sc];
        cOut[r * cols + c] = colors[sr * SCREEN_COLS + sc];
      }
    }
    grid = gOut;
    cgrid = cOut;
    curR = rows >> 1;
    curC = cols >> 1;
  }

  const atlas = scaledAtlas(gh, gw);
  const fg = new Float32Array(16 * 3);
  for (let i = 0; i < 16; i++) {
    const src = i === 0 ? DEFAULT_PALETTE[7] : DEFAULT_PALETTE[i];
    for (let k = 0; k < 3; k++) {
      fg[i * 3 + k] = Math.fround(src[k] / Math.fround(255));
    }
  }
  const bg = new Float32Array(3);
  for (let k = 0; k < 3; k++) {
    bg[k] = Math.fround(DEFAULT_PALETTE[0][k] / Math.fround(255));
  }

  const height = rows * gh;
  const width = cols * gw;
  const out = new Float32Array(3 * height * width);
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) {
      const ch = grid[r * cols + c];
      const idx = cgrid[r * cols + c] & 15;
      const invert = highlight && r === curR && c === curC;
      for (let gy = 0; gy < gh; gy++) {
        const oy = r * gh + gy;
        for (let gx = 0; gx < gw; gx++) {
          const ox = c * gw + gx;
          let on = atlas[(ch * gh + gy) * gw + gx] !== 0;
          if (invert) on = !on;
          for (let k = 0; k < 3; k++) {
            out[(k * height + oy) * width + ox] = on ? fg[idx * 3 + k] : bg[k];
          }
        }
      }
    }
  }
  return { data: out, height, width };
}
