/**
 * The engine's embedded 4x6 bitmap font, re-embedded as hex: 3 bytes per
 * glyph (one 4-bit row per nibble, top row first), 96 glyphs covering
 * ASCII 32..127. Frozen data shared across implementations.
 */

export const GLYPH_HEIGHT = 6;
export const GLYPH_WIDTH = 4;

const FONT_HEX =
  "000000444040aa0000aeaea047842ea248a04a4a604400002444204222400a4a0004e400" +
  "00044800e0000000402248806aaa604c44e0c248e0e242c0aae220e8c2c068ca40e24440" +
  "4a4a404a62c00404000404802484200e0e00842480c240406bb8604aeaa0cacac0688860" +
  "caaac0e8c8e0e8c88068aa60aaeaa0e444e0222a40ac8ca08888e0aeeaa0caaaa04aaa40" +
  "cac8804aaa61cacaa06842c0e44440aaaa40aaa440aaeea0aa4aa0aa4440e248e0c888c0" +
  "8842206222604a000000000e84000006aa6088cac0068860226a6004ac6024e44006a62c" +
  "88caa040444020222c8acca04444400eeaa00caaa004aa400cac8806a6220ac8800684c0" +
  "4e44200aaa600aa4400aaea00a44a00aa62c0e24e024c42044444084648005a000ffffff";

/** [256][6][4] on/off atlas; codes outside 32..127 stay blank. */
export function buildAtlas(): Uint8Array {
  const atlas = new Uint8Array(256 * GLYPH_HEIGHT * GLYPH_WIDTH);
  for (let g = 0; g < 96; g++) {
    const bits = parseInt(FONT_HEX.slice(g * 6, g * 6 + 6), 16);
    const code = 32 + g;
    for (let y = 0; y < GLYPH_HEIGHT; y++) {
      for (let x = 0; x < GLYPH_WIDTH; x++) {
        const bit = (bits >> (GLYPH_HEIGHT * GLYPH_WIDTH - 1 - (y * GLYPH_WIDTH + x))) & 1;
        atlas[(code * GLYPH_HEIGHT + y) * GLYPH_WIDTH + x] = bit;
      }
    }
  }
  return atlas;
}

export const FONT_ATLAS = buildAtlas();
