#!/usr/bin/env python3
"""Generates tests/fixtures/png_fixtures.hpp: small hand-assembled PNG byte
arrays with known pixel content, used by the image decoder tests."""
import struct
import zlib

def chunk(tag: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    )

def png(width, height, bit_depth, color_type, scanlines, interlace=0):
    sig = b"\x89PNG\r\n\x1a\n"
    ihdr = struct.pack(">IIBBBBB", width, height, bit_depth, color_type, 0, 0, interlace)
    return sig + chunk(b"IHDR", ihdr) + chunk(b"IDAT", zlib.compress(scanlines)) + chunk(b"IEND", b"")

fixtures = {}

# 2x2 grayscale, pixels [0,255,17,34], filter 0 rows
fixtures["kGray2x2Png"] = png(2, 2, 8, 0, bytes([0, 0, 255, 0, 17, 34]))
fixtures["kGray2x2Pixels"] = bytes([0, 255, 17, 34])

# 2x2 RGB, filter 0 rows; luma(round(.299R+.587G+.114B)) = [76,150,29,141]
rgb = [(255, 0, 0), (0, 255, 0), (0, 0, 255), (100, 150, 200)]
rows = bytes([0]) + bytes(sum(rgb[0:2], ())) + bytes([0]) + bytes(sum(rgb[2:4], ()))
fixtures["kRgb2x2Png"] = png(2, 2, 8, 2, rows)
fixtures["kRgb2x2Luma"] = bytes([76, 150, 29, 141])

# 3x5 grayscale exercising every scanline filter type (1,2,3,4,0).
# Defiltered rows: [10,20,30],[13,24,35],[20,30,40],[25,45,50],[1,2,3]
scan = bytes(
    [1, 10, 10, 10]
    + [2, 3, 4, 5]
    + [3, 14, 8, 8]
    + [4, 5, 15, 5]
    + [0, 1, 2, 3]
)
fixtures["kFiltered3x5Png"] = png(3, 5, 8, 0, scan)
fixtures["kFiltered3x5Pixels"] = bytes([10, 20, 30, 13, 24, 35, 20, 30, 40, 25, 45, 50, 1, 2, 3])

# 2x2 grayscale at bit depth 16 -> must be rejected
row16 = bytes([0, 0, 0, 0, 255, 0, 0, 0, 17, 0, 34])  # filter0 + 4 big-endian u16
fixtures["kGray2x2Depth16Png"] = png(2, 2, 16, 0, bytes([0, 0, 0, 0, 255, 0, 0]) + bytes([0, 0, 17, 0, 34]))

# 2x2 grayscale, Adam7 interlaced flag set -> must be rejected
fixtures["kGray2x2InterlacedPng"] = png(2, 2, 8, 0, bytes([0, 0, 255, 0, 17, 34]), interlace=1)

out = []
out.append("// Generated by scripts/gen_png_fixtures.py. Do not edit by hand.")
out.append("#pragma once")
out.append("#include <cstdint>")
out.append("#include <vector>")
out.append("")
out.append("namespace png_fixtures {")
out.append("")
for name, data in fixtures.items():
    hexed = ", ".join(f"0x{b:02x}" for b in data)
    out.append(f"inline const std::vector<std::uint8_t> {name} = {{{hexed}}};")
    out.append("")
out.append("}  // namespace png_fixtures")
out.append("")

with open("tests/fixtures/png_fixtures.hpp", "w") as f:
    f.write("\n".join(out))
print("wrote tests/fixtures/png_fixtures.hpp")
