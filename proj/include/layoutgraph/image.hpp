#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <zlib.h>

#include <Eigen/Dense>

#include "layoutgraph/error.hpp"
#include "layoutgraph/geometry.hpp"
#include "layoutgraph/log.hpp"

// Minimal raster support: PNG (the subset document scans use) and binary
// PNM. Decoding handles bit depths 1/2/4/8 and color types gray, RGB,
// palette, gray+alpha and RGBA; 16-bit and interlaced files are rejected.
// Alpha is composited over white, matching scanned-form conventions.
namespace layoutgraph {

struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 (gray) or 3 (rgb), 8 bits per channel
  std::vector<std::uint8_t> pixels;

  bool empty() const { return width == 0 || height == 0; }

  std::uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                   static_cast<std::size_t>(x)) *
                      static_cast<std::size_t>(channels) +
                  static_cast<std::size_t>(c)];
  }
  std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                   static_cast<std::size_t>(x)) *
                      static_cast<std::size_t>(channels) +
                  static_cast<std::size_t>(c)];
  }

  static Image filled(int w, int h, int ch, std::uint8_t value) {
    Image im;
    im.width = w;
    im.height = h;
    im.channels = ch;
    im.pixels.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) *
                         static_cast<std::size_t>(ch),
                     value);
    return im;
  }
};

namespace detail {

inline std::uint32_t be32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

inline void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint8_t paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return static_cast<std::uint8_t>(a);
  if (pb <= pc) return static_cast<std::uint8_t>(b);
  return static_cast<std::uint8_t>(c);
}

inline const std::array<std::uint8_t, 8>& png_signature() {
  static const std::array<std::uint8_t, 8> sig{137, 80, 78, 71, 13, 10, 26, 10};
  return sig;
}

}  // namespace detail

inline Image decode_png(const std::vector<std::uint8_t>& bytes, const std::string& origin = "") {
  const std::string where = origin.empty() ? "png" : origin;
  const auto& sig = detail::png_signature();
  if (bytes.size() < 8 || !std::equal(sig.begin(), sig.end(), bytes.begin()))
    throw IoError(where + ": not a png file");

  std::uint32_t width = 0, height = 0;
  int bit_depth = 0, color_type = -1;
  std::vector<std::uint8_t> idat;
  std::vector<std::array<std::uint8_t, 3>> palette;
  bool saw_ihdr = false, saw_iend = false;

  std::size_t pos = 8;
  while (pos + 8 <= bytes.size() && !saw_iend) {
    const std::uint32_t len = detail::be32(&bytes[pos]);
    if (pos + 12 + len > bytes.size()) throw IoError(where + ": truncated chunk");
    const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
    const std::uint8_t* data = &bytes[pos + 8];
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw IoError(where + ": bad IHDR");
      width = detail::be32(data);
      height = detail::be32(data + 4);
      bit_depth = data[8];
      color_type = data[9];
      if (data[10] != 0 || data[11] != 0) throw IoError(where + ": bad compression/filter method");
      if (data[12] != 0) throw IoError(where + ": interlaced png not supported");
      saw_ihdr = true;
    } else if (std::memcmp(type, "PLTE", 4) == 0) {
      if (len % 3 != 0) throw IoError(where + ": bad PLTE");
      for (std::uint32_t i = 0; i < len; i += 3)
        palette.push_back({data[i], data[i + 1], data[i + 2]});
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      saw_iend = true;
    }
    pos += 12 + len;
  }
  if (!saw_ihdr || width == 0 || height == 0) throw IoError(where + ": missing IHDR");
  if (bit_depth == 16) throw IoError(where + ": 16-bit png not supported");

  int raw_channels = 0;
  switch (color_type) {
    case 0: raw_channels = 1; break;  // gray
    case 2: raw_channels = 3; break;  // rgb
    case 3: raw_channels = 1; break;  // palette indices
    case 4: raw_channels = 2; break;  // gray + alpha
    case 6: raw_channels = 4; break;  // rgba
    default: throw IoError(where + ": unsupported color type " + std::to_string(color_type));
  }
  const bool sub_byte_ok = color_type == 0 || color_type == 3;
  if (bit_depth != 8 && !(sub_byte_ok && (bit_depth == 1 || bit_depth == 2 || bit_depth == 4)))
    throw IoError(where + ": unsupported bit depth " + std::to_string(bit_depth));
  if (color_type == 3 && palette.empty()) throw IoError(where + ": palette image without PLTE");

  const std::size_t bits_per_pixel =
      static_cast<std::size_t>(raw_channels) * static_cast<std::size_t>(bit_depth);
  const std::size_t stride = (static_cast<std::size_t>(width) * bits_per_pixel + 7) / 8;
  const std::size_t bpp = std::max<std::size_t>(1, bits_per_pixel / 8);
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(height) * (stride + 1));
  uLongf raw_len = static_cast<uLongf>(raw.size());
  const int zrc = uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size()));
  if (zrc != Z_OK || raw_len != raw.size())
    throw IoError(where + ": corrupt image data (zlib rc " + std::to_string(zrc) + ")");

  // Undo per-scanline filters in place.
  std::vector<std::uint8_t> scan(static_cast<std::size_t>(height) * stride);
  for (std::uint32_t y = 0; y < height; ++y) {
    const std::uint8_t filter = raw[static_cast<std::size_t>(y) * (stride + 1)];
    const std::uint8_t* src = &raw[static_cast<std::size_t>(y) * (stride + 1) + 1];
    std::uint8_t* cur = &scan[static_cast<std::size_t>(y) * stride];
    const std::uint8_t* up = y > 0 ? &scan[static_cast<std::size_t>(y - 1) * stride] : nullptr;
    for (std::size_t x = 0; x < stride; ++x) {
      const int a = x >= bpp ? cur[x - bpp] : 0;
      const int b = up ? up[x] : 0;
      const int c = (up && x >= bpp) ? up[x - bpp] : 0;
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += detail::paeth(a, b, c); break;
        default: throw IoError(where + ": unknown scanline filter " + std::to_string(filter));
      }
      cur[x] = static_cast<std::uint8_t>(v & 0xff);
    }
  }

  const int out_channels = (color_type == 0 || color_type == 4) ? 1 : 3;
  Image im = Image::filled(static_cast<int>(width), static_cast<int>(height), out_channels, 0);
  const int max_sample = (1 << bit_depth) - 1;

  auto sample_at = [&](const std::uint8_t* row, std::uint32_t x, int ch) -> int {
    if (bit_depth == 8) return row[static_cast<std::size_t>(x) * bpp + static_cast<std::size_t>(ch)];
    const std::size_t bit = static_cast<std::size_t>(x) * bits_per_pixel;
    const std::uint8_t byte = row[bit / 8];
    const int shift = 8 - bit_depth - static_cast<int>(bit % 8);
    return (byte >> shift) & max_sample;
  };

  for (std::uint32_t y = 0; y < height; ++y) {
    const std::uint8_t* row = &scan[static_cast<std::size_t>(y) * stride];
    for (std::uint32_t x = 0; x < width; ++x) {
      switch (color_type) {
        case 0: {
          const int v = sample_at(row, x, 0);
          im.at(static_cast<int>(x), static_cast<int>(y), 0) =
              static_cast<std::uint8_t>(v * 255 / max_sample);
          break;
        }
        case 2: {
          for (int c = 0; c < 3; ++c)
            im.at(static_cast<int>(x), static_cast<int>(y), c) =
                static_cast<std::uint8_t>(sample_at(row, x, c));
          break;
        }
        case 3: {
          const auto idx = static_cast<std::size_t>(sample_at(row, x, 0));
          if (idx >= palette.size()) throw IoError(where + ": palette index out of range");
          for (int c = 0; c < 3; ++c)
            im.at(static_cast<int>(x), static_cast<int>(y), c) = palette[idx][c];
          break;
        }
        case 4: {
          const int v = sample_at(row, x, 0);
          const int a = sample_at(row, x, 1);
          im.at(static_cast<int>(x), static_cast<int>(y), 0) =
              static_cast<std::uint8_t>((v * a + 255 * (255 - a)) / 255);
          break;
        }
        case 6: {
          const int a = sample_at(row, x, 3);
          for (int c = 0; c < 3; ++c) {
            const int v = sample_at(row, x, c);
            im.at(static_cast<int>(x), static_cast<int>(y), c) =
                static_cast<std::uint8_t>((v * a + 255 * (255 - a)) / 255);
          }
          break;
        }
        default: break;
      }
    }
  }
  return im;
}

inline std::vector<std::uint8_t> encode_png(const Image& im) {
  if (im.empty() || (im.channels != 1 && im.channels != 3))
    throw Error("internal", "encode_png: expected a non-empty 1- or 3-channel image");
  std::vector<std::uint8_t> out(detail::png_signature().begin(), detail::png_signature().end());

  auto write_chunk = [&out](const char* type, const std::vector<std::uint8_t>& data) {
    detail::put_be32(out, static_cast<std::uint32_t>(data.size()));
    std::vector<std::uint8_t> body(type, type + 4);
    body.insert(body.end(), data.begin(), data.end());
    out.insert(out.end(), body.begin(), body.end());
    const auto crc = crc32(0, body.data(), static_cast<uInt>(body.size()));
    detail::put_be32(out, static_cast<std::uint32_t>(crc));
  };

  std::vector<std::uint8_t> ihdr;
  detail::put_be32(ihdr, static_cast<std::uint32_t>(im.width));
  detail::put_be32(ihdr, static_cast<std::uint32_t>(im.height));
  ihdr.push_back(8);
  ihdr.push_back(im.channels == 1 ? 0 : 2);
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  write_chunk("IHDR", ihdr);

  const std::size_t stride = static_cast<std::size_t>(im.width) * static_cast<std::size_t>(im.channels);
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(im.height) * (stride + 1));
  for (int y = 0; y < im.height; ++y) {
    raw.push_back(0);  // filter: none
    const std::uint8_t* row = &im.pixels[static_cast<std::size_t>(y) * stride];
    raw.insert(raw.end(), row, row + stride);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw Error("internal", "encode_png: compression failed");
  compressed.resize(bound);
  write_chunk("IDAT", compressed);
  write_chunk("IEND", {});
  return out;
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

namespace detail {

// Parses the P5/P6 header; returns the offset where pixel data begins.
inline std::size_t parse_pnm_header(const std::vector<std::uint8_t>& bytes,
                                    const std::string& where, int& w, int& h, int& maxval,
                                    int& channels) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw IoError(where + ": not a binary pnm file");
  channels = bytes[1] == '5' ? 1 : 3;
  std::size_t pos = 2;
  int fields[3] = {0, 0, 0};
  for (int f = 0; f < 3; ++f) {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    int v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      any = true;
      ++pos;
    }
    if (!any) throw IoError(where + ": malformed pnm header");
    fields[f] = v;
  }
  if (pos >= bytes.size() || !std::isspace(bytes[pos]))
    throw IoError(where + ": malformed pnm header");
  ++pos;
  w = fields[0];
  h = fields[1];
  maxval = fields[2];
  if (maxval <= 0 || maxval > 255) throw IoError(where + ": unsupported pnm maxval");
  return pos;
}

}  // namespace detail

inline Image decode_pnm(const std::vector<std::uint8_t>& bytes, const std::string& origin = "") {
  const std::string where = origin.empty() ? "pnm" : origin;
  int w = 0, h = 0, maxval = 0, channels = 0;
  const std::size_t data = detail::parse_pnm_header(bytes, where, w, h, maxval, channels);
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) *
                           static_cast<std::size_t>(channels);
  if (bytes.size() - data < need) throw IoError(where + ": truncated pnm data");
  Image im = Image::filled(w, h, channels, 0);
  for (std::size_t i = 0; i < need; ++i)
    im.pixels[i] = static_cast<std::uint8_t>(bytes[data + i] * 255 / maxval);
  return im;
}

inline Image read_image(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  if (bytes.size() >= 8 &&
      std::equal(detail::png_signature().begin(), detail::png_signature().end(), bytes.begin()))
    return decode_png(bytes, path.string());
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6'))
    return decode_pnm(bytes, path.string());
  throw IoError(path.string() + ": unrecognized image format");
}

// Image dimensions from the header alone, without a full decode.
inline ImageSize read_image_size(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  if (bytes.size() >= 24 &&
      std::equal(detail::png_signature().begin(), detail::png_signature().end(), bytes.begin())) {
    if (std::memcmp(&bytes[12], "IHDR", 4) != 0) throw IoError(path.string() + ": missing IHDR");
    return ImageSize{static_cast<double>(detail::be32(&bytes[16])),
                     static_cast<double>(detail::be32(&bytes[20]))};
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) {
    int w = 0, h = 0, maxval = 0, channels = 0;
    detail::parse_pnm_header(bytes, path.string(), w, h, maxval, channels);
    return ImageSize{static_cast<double>(w), static_cast<double>(h)};
  }
  throw IoError(path.string() + ": unrecognized image format");
}

inline void write_png(const Image& im, const std::filesystem::path& path) {
  write_bytes(path, encode_png(im));
}

inline Image to_gray(const Image& im) {
  if (im.channels == 1) return im;
  Image g = Image::filled(im.width, im.height, 1, 0);
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x) {
      const double v =
          0.299 * im.at(x, y, 0) + 0.587 * im.at(x, y, 1) + 0.114 * im.at(x, y, 2);
      g.at(x, y, 0) = static_cast<std::uint8_t>(std::lround(v));
    }
  return g;
}

inline Image to_rgb(const Image& im) {
  if (im.channels == 3) return im;
  Image c = Image::filled(im.width, im.height, 3, 0);
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x)
      for (int ch = 0; ch < 3; ++ch) c.at(x, y, ch) = im.at(x, y, 0);
  return c;
}

// Grayscale crop resampled to size x size with bilinear interpolation,
// intensities scaled to [0, 1]. Returns nothing when the box clamps to less
// than one pixel in either direction.
inline std::optional<Eigen::MatrixXd> crop_resize_gray(const Image& gray, const BBox& box,
                                                       int size) {
  if (gray.channels != 1) throw Error("internal", "crop_resize_gray: expected grayscale input");
  if (size < 1) throw Error("internal", "crop_resize_gray: size must be positive");
  const double x0 = std::clamp(box.xmin, 0.0, static_cast<double>(gray.width));
  const double y0 = std::clamp(box.ymin, 0.0, static_cast<double>(gray.height));
  const double x1 = std::clamp(box.xmax, 0.0, static_cast<double>(gray.width));
  const double y1 = std::clamp(box.ymax, 0.0, static_cast<double>(gray.height));
  if (x1 - x0 < 1.0 || y1 - y0 < 1.0) return std::nullopt;

  Eigen::MatrixXd out(size, size);
  const double sx = (x1 - x0) / size;
  const double sy = (y1 - y0) / size;
  for (int oy = 0; oy < size; ++oy) {
    for (int ox = 0; ox < size; ++ox) {
      const double fx = std::clamp(x0 + (ox + 0.5) * sx - 0.5, 0.0, gray.width - 1.0);
      const double fy = std::clamp(y0 + (oy + 0.5) * sy - 0.5, 0.0, gray.height - 1.0);
      const int ix = static_cast<int>(fx);
      const int iy = static_cast<int>(fy);
      const int ix1 = std::min(ix + 1, gray.width - 1);
      const int iy1 = std::min(iy + 1, gray.height - 1);
      const double tx = fx - ix;
      const double ty = fy - iy;
      const double v = (1 - tx) * (1 - ty) * gray.at(ix, iy, 0) +
                       tx * (1 - ty) * gray.at(ix1, iy, 0) +
                       (1 - tx) * ty * gray.at(ix, iy1, 0) + tx * ty * gray.at(ix1, iy1, 0);
      out(oy, ox) = v / 255.0;
    }
  }
  return out;
}

using Color = std::array<std::uint8_t, 3>;

inline void draw_pixel(Image& im, int x, int y, const Color& color) {
  if (x < 0 || y < 0 || x >= im.width || y >= im.height) return;
  for (int c = 0; c < 3; ++c) im.at(x, y, c) = color[static_cast<std::size_t>(c)];
}

inline void draw_rect(Image& im, const BBox& box, const Color& color, int thickness = 2) {
  if (im.channels != 3) throw Error("internal", "draw_rect: expected rgb image");
  const int x0 = static_cast<int>(std::lround(box.xmin));
  const int y0 = static_cast<int>(std::lround(box.ymin));
  const int x1 = static_cast<int>(std::lround(box.xmax));
  const int y1 = static_cast<int>(std::lround(box.ymax));
  for (int t = 0; t < thickness; ++t) {
    for (int x = x0; x <= x1; ++x) {
      draw_pixel(im, x, y0 + t, color);
      draw_pixel(im, x, y1 - t, color);
    }
    for (int y = y0; y <= y1; ++y) {
      draw_pixel(im, x0 + t, y, color);
      draw_pixel(im, x1 - t, y, color);
    }
  }
}

inline void draw_line(Image& im, double x0, double y0, double x1, double y1, const Color& color,
                      int thickness = 2) {
  if (im.channels != 3) throw Error("internal", "draw_line: expected rgb image");
  const double len = std::max(std::hypot(x1 - x0, y1 - y0), 1.0);
  const int steps = static_cast<int>(std::ceil(len)) * 2;
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    const int cx = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
    const int cy = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
    for (int dy = -(thickness / 2); dy <= thickness / 2; ++dy)
      for (int dx = -(thickness / 2); dx <= thickness / 2; ++dx)
        draw_pixel(im, cx + dx, cy + dy, color);
  }
}

inline Image hstack(const Image& a, const Image& b, int gap = 8,
                    std::uint8_t fill = 255) {
  const Image ra = to_rgb(a);
  const Image rb = to_rgb(b);
  Image out = Image::filled(ra.width + gap + rb.width, std::max(ra.height, rb.height), 3, fill);
  for (int y = 0; y < ra.height; ++y)
    for (int x = 0; x < ra.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = ra.at(x, y, c);
  for (int y = 0; y < rb.height; ++y)
    for (int x = 0; x < rb.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(ra.width + gap + x, y, c) = rb.at(x, y, c);
  return out;
}

}  // namespace layoutgraph
