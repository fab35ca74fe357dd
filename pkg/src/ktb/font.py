"""Embedded 4x6 bitmap font for terminal rasterization.

Glyphs cover printable ASCII 32..127; every other byte renders as background.
Each glyph is six rows of four cells ('#' = foreground). The same bitmaps are
re-embedded by foreign bindings, so treat this table as frozen data: changing
a pixel changes rendered tensors everywhere.
"""

from __future__ import annotations

import numpy as np

GLYPH_HEIGHT = 6
GLYPH_WIDTH = 4

# ASCII 32..127, one entry per code point, rows top to bottom joined by '/'.
_GLYPHS = [
    "..../..../..../..../..../....",   # 32 ' '
    ".#../.#../.#../..../.#../....",   # 33 '!'
    "#.#./#.#./..../..../..../....",   # 34 '"'
    "#.#./###./#.#./###./#.#./....",   # 35 '#'
    ".#../.###/#.../.#../..#./###.",   # 36 '$'
    "#.#./..#./.#../#.../#.#./....",   # 37 '%'
    ".#../#.#./.#../#.#./.##./....",   # 38 '&'
    ".#../.#../..../..../..../....",   # 39 '\''
    "..#./.#../.#../.#../..#./....",   # 40 '('
    ".#../..#./..#./..#./.#../....",   # 41 ')'
    "..../#.#./.#../#.#./..../....",   # 42 '*'
    "..../.#../###./.#../..../....",   # 43 '+'
    "..../..../..../.#../.#../#...",   # 44 ','
    "..../..../###./..../..../....",   # 45 '-'
    "..../..../..../..../.#../....",   # 46 '.'
    "..#./..#./.#../#.../#.../....",   # 47 '/'
    ".##./#.#./#.#./#.#./.##./....",   # 48 '0'
    ".#../##../.#../.#../###./....",   # 49 '1'
    "##../..#./.#../#.../###./....",   # 50 '2'
    "###./..#./.#../..#./##../....",   # 51 '3'
    "#.#./#.#./###./..#./..#./....",   # 52 '4'
    "###./#.../##../..#./##../....",   # 53 '5'
    ".##./#.../##../#.#./.#../....",   # 54 '6'
    "###./..#./.#../.#../.#../....",   # 55 '7'
    ".#../#.#./.#../#.#./.#../....",   # 56 '8'
    ".#../#.#./.##./..#./##../....",   # 57 '9'
    "..../.#../..../.#../..../....",   # 58 ':'
    "..../.#../..../.#../#.../....",   # 59 ';'
    "..#./.#../#.../.#../..#./....",   # 60 '<'
    "..../###./..../###./..../....",   # 61 '='
    "#.../.#../..#./.#../#.../....",   # 62 '>'
    "##../..#./.#../..../.#../....",   # 63 '?'
    ".##./#.##/#.##/#.../.##./....",   # 64 '@'
    ".#../#.#./###./#.#./#.#./....",   # 65 'A'
    "##../#.#./##../#.#./##../....",   # 66 'B'
    ".##./#.../#.../#.../.##./....",   # 67 'C'
    "##../#.#./#.#./#.#./##../....",   # 68 'D'
    "###./#.../##../#.../###./....",   # 69 'E'
    "###./#.../##../#.../#.../....",   # 70 'F'
    ".##./#.../#.#./#.#./.##./....",   # 71 'G'
    "#.#./#.#./###./#.#./#.#./....",   # 72 'H'
    "###./.#../.#../.#../###./....",   # 73 'I'
    "..#./..#./..#./#.#./.#../....",   # 74 'J'
    "#.#./##../#.../##../#.#./....",   # 75 'K'
    "#.../#.../#.../#.../###./....",   # 76 'L'
    "#.#./###./###./#.#./#.#./....",   # 77 'M'
    "##../#.#./#.#./#.#./#.#./....",   # 78 'N'
    ".#../#.#./#.#./#.#./.#../....",   # 79 'O'
    "##../#.#./##../#.../#.../....",   # 80 'P'
    ".#../#.#./#.#./#.#./.##./...#",   # 81 'Q'
    "##../#.#./##../#.#./#.#./....",   # 82 'R'
    ".##./#.../.#../..#./##../....",   # 83 'S'
    "###./.#../.#../.#../.#../....",   # 84 'T'
    "#.#./#.#./#.#./#.#./.#../....",   # 85 'U'
    "#.#./#.#./#.#./.#../.#../....",   # 86 'V'
    "#.#./#.#./###./###./#.#./....",   # 87 'W'
    "#.#./#.#./.#../#.#./#.#./....",   # 88 'X'
    "#.#./#.#./.#../.#../.#../....",   # 89 'Y'
    "###./..#./.#../#.../###./....",   # 90 'Z'
    "##../#.../#.../#.../##../....",   # 91 '['
    "#.../#.../.#../..#./..#./....",   # 92 '\\'
    ".##./..#./..#./..#./.##./....",   # 93 ']'
    ".#../#.#./..../..../..../....",   # 94 '^'
    "..../..../..../..../..../###.",   # 95 '_'
    "#.../.#../..../..../..../....",   # 96 '`'
    "..../.##./#.#./#.#./.##./....",   # 97 'a'
    "#.../#.../##../#.#./##../....",   # 98 'b'
    "..../.##./#.../#.../.##./....",   # 99 'c'
    "..#./..#./.##./#.#./.##./....",   # 100 'd'
    "..../.#../#.#./##../.##./....",   # 101 'e'
    "..#./.#../###./.#../.#../....",   # 102 'f'
    "..../.##./#.#./.##./..#./##..",   # 103 'g'
    "#.../#.../##../#.#./#.#./....",   # 104 'h'
    ".#../..../.#../.#../.#../....",   # 105 'i'
    "..#./..../..#./..#./..#./##..",   # 106 'j'
    "#.../#.#./##../##../#.#./....",   # 107 'k'
    ".#../.#../.#../.#../.#../....",   # 108 'l'
    "..../###./###./#.#./#.#./....",   # 109 'm'
    "..../##../#.#./#.#./#.#./....",   # 110 'n'
    "..../.#../#.#./#.#./.#../....",   # 111 'o'
    "..../##../#.#./##../#.../#...",   # 112 'p'
    "..../.##./#.#./.##./..#./..#.",   # 113 'q'
    "..../#.#./##../#.../#.../....",   # 114 'r'
    "..../.##./#.../.#../##../....",   # 115 's'
    ".#../###./.#../.#../..#./....",   # 116 't'
    "..../#.#./#.#./#.#./.##./....",   # 117 'u'
    "..../#.#./#.#./.#../.#../....",   # 118 'v'
    "..../#.#./#.#./###./#.#./....",   # 119 'w'
    "..../#.#./.#../.#../#.#./....",   # 120 'x'
    "..../#.#./#.#./.##./..#./##..",   # 121 'y'
    "..../###./..#./.#../###./....",   # 122 'z'
    "..#./.#../##../.#../..#./....",   # 123 '{'
    ".#../.#../.#../.#../.#../....",   # 124 '|'
    "#.../.#../.##./.#../#.../....",   # 125 '}'
    "..../.#.#/#.#./..../..../....",   # 126 '~'
    "####/####/####/####/####/####",   # 127 DEL
]


def _build_atlas() -> np.ndarray:
    atlas = np.zeros((256, GLYPH_HEIGHT, GLYPH_WIDTH), dtype=np.uint8)
    for i, art in enumerate(_GLYPHS):
        rows = art.split("/")
        assert len(rows) == GLYPH_HEIGHT and all(len(r) == GLYPH_WIDTH for r in rows)
        for y, row in enumerate(rows):
            for x, cell in enumerate(row):
                atlas[32 + i, y, x] = 1 if cell == "#" else 0
    return atlas


#: [256, 6, 4] uint8 on/off masks; rows outside 32..127 stay blank.
FONT_ATLAS = _build_atlas()


def glyph_hex() -> str:
    """Font as a hex string (3 bytes per glyph, 4 bits per row), for
    re-embedding in other languages."""
    out = []
    for code in range(32, 128):
        bits = 0
        for y in range(GLYPH_HEIGHT):
            for x in range(GLYPH_WIDTH):
                bits = (bits << 1) | int(FONT_ATLAS[code, y, x])
        out.append(f"{bits:06x}")
    return "".join(out)
