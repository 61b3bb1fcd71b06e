#!/usr/bin/env python3
"""Regenerates the PNG decode fixtures and their expected-pixel manifest.

Most files are written by Pillow; the 2- and 4-bit grayscale files are
assembled by hand from the PNG spec since Pillow cannot emit them. Expected
pixels follow the decoder's conventions: grayscale output for color types 0
and 4, RGB otherwise, alpha composited over white with integer arithmetic.
"""

import json
import struct
import zlib
from pathlib import Path

from PIL import Image

HERE = Path(__file__).parent
W, H = 8, 5


def gradient(w=W, h=H):
    return [[(x * 37 + y * 11) % 256 for x in range(w)] for y in range(h)]


def chunk(tag, data):
    return struct.pack(">I", len(data)) + tag + data + struct.pack(
        ">I", zlib.crc32(tag + data) & 0xFFFFFFFF)


def write_png_raw(path, width, height, bit_depth, color_type, rows, palette=None):
    sig = b"\x89PNG\r\n\x1a\n"
    ihdr = struct.pack(">IIBBBBB", width, height, bit_depth, color_type, 0, 0, 0)
    raw = b"".join(b"\x00" + r for r in rows)
    out = sig + chunk(b"IHDR", ihdr)
    if palette is not None:
        out += chunk(b"PLTE", palette)
    out += chunk(b"IDAT", zlib.compress(raw)) + chunk(b"IEND", b"")
    path.write_bytes(out)


def pack_bits(values, bit_depth, width):
    row = bytearray()
    acc, nbits = 0, 0
    for v in values:
        acc = (acc << bit_depth) | v
        nbits += bit_depth
        if nbits == 8:
            row.append(acc)
            acc, nbits = 0, 0
    if nbits:
        row.append(acc << (8 - nbits))
    return bytes(row)


manifest = {}


def expect(name, channels, pixels):
    manifest[name] = {
        "width": W,
        "height": H,
        "channels": channels,
        "pixels": [v for row in pixels for v in row],
    }


# 8-bit grayscale.
g = gradient()
im = Image.new("L", (W, H))
im.putdata([v for row in g for v in row])
im.save(HERE / "gray8.png")
expect("gray8.png", 1, g)

# 1-bit grayscale.
bits = [[1 if (x + y) % 3 == 0 else 0 for x in range(W)] for y in range(H)]
im = Image.new("1", (W, H))
im.putdata([v * 255 for row in bits for v in row])
im.save(HERE / "gray1.png")
expect("gray1.png", 1, [[v * 255 for v in row] for row in bits])

# 2- and 4-bit grayscale, hand-assembled.
for depth in (2, 4):
    maxv = (1 << depth) - 1
    vals = [[(x + y) % (maxv + 1) for x in range(W)] for y in range(H)]
    rows = [pack_bits(r, depth, W) for r in vals]
    write_png_raw(HERE / f"gray{depth}.png", W, H, depth, 0, rows)
    expect(f"gray{depth}.png", 1, [[v * 255 // maxv for v in row] for row in vals])

# RGB 8-bit.
rgb = [[((x * 31) % 256, (y * 53) % 256, (x * y * 7) % 256) for x in range(W)]
       for y in range(H)]
im = Image.new("RGB", (W, H))
im.putdata([p for row in rgb for p in row])
im.save(HERE / "rgb8.png")
expect("rgb8.png", 3, [[c for p in row for c in p] for row in rgb])

# Palette, 4-bit (16 colors).
palette_colors = [(i * 16, 255 - i * 16, (i * 7) % 256) for i in range(16)]
idx = [[(x + 2 * y) % 16 for x in range(W)] for y in range(H)]
im = Image.new("P", (W, H))
im.putpalette([c for p in palette_colors for c in p] + [0] * (768 - 48))
im.putdata([v for row in idx for v in row])
im.save(HERE / "palette4.png", bits=4)
expect("palette4.png", 3,
       [[c for v in row for c in palette_colors[v]] for row in idx])

# Gray + alpha: composite over white with integer arithmetic.
la = [[((x * 40) % 256, (y * 60) % 256) for x in range(W)] for y in range(H)]
im = Image.new("LA", (W, H))
im.putdata([p for row in la for p in row])
im.save(HERE / "gray_alpha8.png")
expect("gray_alpha8.png", 1,
       [[(v * a + 255 * (255 - a)) // 255 for v, a in row] for row in la])

# RGBA: composite over white.
rgba = [[((x * 25) % 256, (y * 45) % 256, ((x + y) * 33) % 256, (x * 36) % 256)
         for x in range(W)] for y in range(H)]
im = Image.new("RGBA", (W, H))
im.putdata([p for row in rgba for p in row])
im.save(HERE / "rgba8.png")
expect("rgba8.png", 3,
       [[(v * a + 255 * (255 - a)) // 255 for (r, g_, b, a) in row
         for v in (r, g_, b)] for row in rgba])

# 16-bit grayscale: must be rejected.
im = Image.new("I;16", (W, H))
im.putdata([x * 1000 for x in range(W * H)])
im.save(HERE / "gray16.png")

# Interlaced: flip the IHDR interlace flag of a valid file and fix the CRC.
data = bytearray((HERE / "gray8.png").read_bytes())
assert data[12:16] == b"IHDR"
data[8 + 8 + 13 - 1] = 1  # interlace byte is the last of the 13 IHDR bytes
body = bytes(data[12:12 + 4 + 13])
data[12 + 4 + 13:12 + 4 + 13 + 4] = struct.pack(">I", zlib.crc32(body) & 0xFFFFFFFF)
(HERE / "interlaced.png").write_bytes(bytes(data))

(HERE / "expected.json").write_text(json.dumps(manifest, indent=1))
print("wrote", len(manifest), "expectations and", len(list(HERE.glob('*.png'))), "files")
