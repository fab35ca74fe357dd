import assert from "node:assert/strict";
import { test } from "node:test";
import { FONT_ATLAS, GLYPH_HEIGHT, GLYPH_WIDTH } from "../src/font.js";
import { renderScreen, SCREEN_COLS, SCREEN_ROWS } from "../src/render.js";

function blank(): { chars: Uint8Array; colors: Int8Array } {
  return {
    chars: new Uint8Array(SCREEN_ROWS * SCREEN_COLS).fill(32),
    colors: new Int8Array(SCREEN_ROWS * SCREEN_COLS),
  };
}

test("font atlas covers printable ascii", () => {
  assert.equal(FONT_ATLAS.length, 256 * GLYPH_HEIGHT * GLYPH_WIDTH);
  for (let code = 33; code < 128; code++) {
    let sum = 0;
    for (let i = 0; i < GLYPH_HEIGHT * GLYPH_WIDTH; i++) {
      sum += FONT_ATLAS[code * GLYPH_HEIGHT * GLYPH_WIDTH + i];
    }
    assert.ok(sum > 0, `glyph ${code} empty`);
  }
});

test("blank screen renders constant background", () => {
  const { chars, colors } = blank();
  const img = renderScreen(chars, colors, [0, 0], { cursorHighlight: false });
  assert.equal(img.height, 144);
  assert.equal(img.width, 320);
  const first = img.data[0];
  assert.ok(img.data.every((v) => v === first));
});

test("single glyph confined to its cell", () => {
  const { chars, colors } = blank();
  chars[0] = "@".charCodeAt(0);
  colors[0] = 7;
  const img = renderScreen(chars, colors, [5, 5],
                           { glyphHeight: 3, glyphWidth: 3,
                             cursorHighlight: false });
  let maxRow = -1;
  let maxCol = -1;
  let any = false;
  for (let y = 0; y < img.height; y++) {
    for (let x = 0; x < img.width; x++) {
      if (img.data[y * img.width + x] > 0) {
        any = true;
        maxRow = Math.max(maxRow, y);
        maxCol = Math.max(maxCol, x);
      }
    }
  }
  assert.ok(any);
  assert.ok(maxRow < 3 && maxCol < 3);
});

test("crop pads offscreen cells and centers the cursor", () => {
  const { chars, colors } = blank();
  chars[0] = "@".charCodeAt(0);
  const img = renderScreen(chars, colors, [0, 0],
                           { cropRows: 9, cropCols: 9, cursorHighlight: false });
  assert.equal(img.height, 9 * GLYPH_HEIGHT);
  assert.equal(img.width, 9 * GLYPH_WIDTH);
});

test("determinism", () => {
  const { chars, colors } = blank();
  for (let i = 0; i < chars.length; i++) chars[i] = 33 + (i % 90);
  const a = renderScreen(chars, colors, [3, 4]);
  const b = renderScreen(chars, colors, [3, 4]);
  assert.deepEqual(a.data, b.data);
});
