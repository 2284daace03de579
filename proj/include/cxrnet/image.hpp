#pragma once

#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include "cxrnet/errors.hpp"

namespace cxrnet {

/// 8-bit single-channel raster, row-major.
struct GrayImage {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::int64_t y, std::int64_t x) const {
    return pixels[static_cast<std::size_t>(y * width + x)];
  }
  std::uint8_t& at(std::int64_t y, std::int64_t x) {
    return pixels[static_cast<std::size_t>(y * width + x)];
  }
  bool operator==(const GrayImage& o) const {
    return width == o.width && height == o.height && pixels == o.pixels;
  }
};

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return bytes;
}

// --- PGM (binary P5) ---

inline std::int64_t pgm_read_int(const std::vector<std::uint8_t>& b, std::size_t& pos, const std::string& path) {
  // Skip whitespace and '#' comment lines between header fields.
  for (;;) {
    while (pos < b.size() && std::isspace(b[pos])) ++pos;
    if (pos < b.size() && b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  if (pos >= b.size() || !std::isdigit(b[pos])) throw DataError(path + ": malformed PGM header");
  std::int64_t v = 0;
  while (pos < b.size() && std::isdigit(b[pos])) {
    v = v * 10 + (b[pos] - '0');
    if (v > (std::int64_t{1} << 31)) throw DataError(path + ": PGM header value out of range");
    ++pos;
  }
  return v;
}

inline GrayImage decode_pgm(const std::vector<std::uint8_t>& bytes, const std::string& path) {
  std::size_t pos = 2;  // past "P5"
  const std::int64_t width = pgm_read_int(bytes, pos, path);
  const std::int64_t height = pgm_read_int(bytes, pos, path);
  const std::int64_t maxval = pgm_read_int(bytes, pos, path);
  if (width < 1 || height < 1) throw DataError(path + ": bad PGM dimensions");
  if (maxval > 255) throw DataError(path + ": PGM bit depth is not 8 (maxval " + std::to_string(maxval) + ")");
  if (maxval < 1) throw DataError(path + ": bad PGM maxval");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw DataError(path + ": malformed PGM header");
  ++pos;  // single whitespace before the raster
  const std::size_t need = static_cast<std::size_t>(width * height);
  if (bytes.size() - pos < need) throw DataError(path + ": truncated PGM raster");
  GrayImage img;
  img.width = width;
  img.height = height;
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
  return img;
}

// --- PNG (8-bit grayscale or RGB, non-interlaced) ---

inline std::uint32_t be32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

inline std::vector<std::uint8_t> zlib_inflate(const std::vector<std::uint8_t>& src, std::size_t expected,
                                              const std::string& path) {
  std::vector<std::uint8_t> out(expected);
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) throw DataError(path + ": zlib init failed");
  zs.next_in = const_cast<Bytef*>(src.data());
  zs.avail_in = static_cast<uInt>(src.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || zs.avail_out != 0) throw DataError(path + ": corrupt PNG image data");
  return out;
}

inline std::uint8_t paeth(std::uint8_t a, std::uint8_t b, std::uint8_t c) {
  const int p = static_cast<int>(a) + static_cast<int>(b) - static_cast<int>(c);
  const int pa = std::abs(p - static_cast<int>(a));
  const int pb = std::abs(p - static_cast<int>(b));
  const int pc = std::abs(p - static_cast<int>(c));
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

inline GrayImage decode_png(const std::vector<std::uint8_t>& bytes, const std::string& path) {
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() < 8 || !std::equal(sig, sig + 8, bytes.begin())) {
    throw DataError(path + ": not a PNG file");
  }
  std::size_t pos = 8;
  std::uint32_t width = 0, height = 0;
  int bit_depth = -1, color_type = -1;
  bool saw_ihdr = false, saw_iend = false;
  std::vector<std::uint8_t> idat;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t len = be32(&bytes[pos]);
    const std::string tag(bytes.begin() + static_cast<std::ptrdiff_t>(pos + 4),
                          bytes.begin() + static_cast<std::ptrdiff_t>(pos + 8));
    if (pos + 12 + len > bytes.size()) throw DataError(path + ": truncated PNG chunk " + tag);
    const std::uint8_t* payload = &bytes[pos + 8];
    const std::uint32_t stored_crc = be32(&bytes[pos + 8 + len]);
    std::uint32_t crc = static_cast<std::uint32_t>(crc32(0L, Z_NULL, 0));
    crc = static_cast<std::uint32_t>(crc32(crc, &bytes[pos + 4], len + 4));
    if (crc != stored_crc) throw DataError(path + ": PNG chunk " + tag + " failed its checksum");
    if (tag == "IHDR") {
      if (len != 13) throw DataError(path + ": bad IHDR length");
      width = be32(payload);
      height = be32(payload + 4);
      bit_depth = payload[8];
      color_type = payload[9];
      if (payload[10] != 0 || payload[11] != 0) throw DataError(path + ": unsupported PNG compression/filter method");
      if (payload[12] != 0) throw DataError(path + ": interlaced PNG is not supported");
      saw_ihdr = true;
    } else if (tag == "IDAT") {
      idat.insert(idat.end(), payload, payload + len);
    } else if (tag == "IEND") {
      saw_iend = true;
      break;
    }
    // Ancillary chunks are skipped.
    pos += 12 + len;
  }
  if (!saw_ihdr || !saw_iend) throw DataError(path + ": truncated PNG stream");
  if (width == 0 || height == 0) throw DataError(path + ": bad PNG dimensions");
  if (bit_depth != 8) throw DataError(path + ": PNG bit depth is not 8 (got " + std::to_string(bit_depth) + ")");
  if (color_type != 0 && color_type != 2) {
    throw DataError(path + ": unsupported PNG color type " + std::to_string(color_type) +
                    " (8-bit grayscale or RGB only)");
  }
  const std::size_t bpp = color_type == 2 ? 3 : 1;
  const std::size_t stride = static_cast<std::size_t>(width) * bpp;
  std::vector<std::uint8_t> raw = zlib_inflate(idat, (stride + 1) * height, path);

  // Undo per-scanline filtering in place.
  std::vector<std::uint8_t> prev(stride, 0);
  std::vector<std::uint8_t> flat;
  flat.reserve(stride * height);
  for (std::uint32_t y = 0; y < height; ++y) {
    const std::uint8_t filter = raw[(stride + 1) * y];
    std::uint8_t* row = &raw[(stride + 1) * y + 1];
    switch (filter) {
      case 0:
        break;
      case 1:
        for (std::size_t i = bpp; i < stride; ++i) row[i] = static_cast<std::uint8_t>(row[i] + row[i - bpp]);
        break;
      case 2:
        for (std::size_t i = 0; i < stride; ++i) row[i] = static_cast<std::uint8_t>(row[i] + prev[i]);
        break;
      case 3:
        for (std::size_t i = 0; i < stride; ++i) {
          const int a = i >= bpp ? row[i - bpp] : 0;
          row[i] = static_cast<std::uint8_t>(row[i] + ((a + prev[i]) >> 1));
        }
        break;
      case 4:
        for (std::size_t i = 0; i < stride; ++i) {
          const std::uint8_t a = i >= bpp ? row[i - bpp] : 0;
          const std::uint8_t c = i >= bpp ? prev[i - bpp] : 0;
          row[i] = static_cast<std::uint8_t>(row[i] + paeth(a, prev[i], c));
        }
        break;
      default:
        throw DataError(path + ": unknown PNG filter type " + std::to_string(filter));
    }
    std::copy(row, row + stride, prev.begin());
    flat.insert(flat.end(), row, row + stride);
  }

  GrayImage img;
  img.width = width;
  img.height = height;
  img.pixels.resize(static_cast<std::size_t>(width) * height);
  if (color_type == 0) {
    img.pixels = std::move(flat);
  } else {
    // Integer luma conversion for RGB sources.
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
      const double r = flat[3 * i], g = flat[3 * i + 1], b = flat[3 * i + 2];
      img.pixels[i] = static_cast<std::uint8_t>(std::lround(0.299 * r + 0.587 * g + 0.114 * b));
    }
  }
  return img;
}

}  // namespace detail

/// Decodes an 8-bit grayscale raster from a binary PGM (P5) or a PNG
/// (8-bit grayscale, or 8-bit RGB reduced by the integer luma rule
/// round(0.299 R + 0.587 G + 0.114 B)). The format is sniffed from the
/// file's magic bytes.
inline GrayImage load_image(const std::string& path) {
  const std::vector<std::uint8_t> bytes = detail::read_file_bytes(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return detail::decode_pgm(bytes, path);
  if (bytes.size() >= 8 && bytes[0] == 0x89 && bytes[1] == 'P') return detail::decode_png(bytes, path);
  throw DataError(path + ": unsupported image format (binary PGM or PNG expected)");
}

inline void save_pgm(const GrayImage& img, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open " + path + " for writing");
  os << "P5\n" << img.width << " " << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()),
           static_cast<std::streamsize>(img.pixels.size()));
  if (!os) throw DataError("short write to " + path);
}

}  // namespace cxrnet
