#include "poivre/canvas.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace poivre {

Raster::Raster(int w, int h, Rgb fill) : width(w), height(h) {
  if (w < 1 || h < 1) throw InvalidInput("raster dimensions must be >= 1");
  pixels.resize(static_cast<size_t>(w) * h * 3);
  for (size_t i = 0; i < pixels.size(); i += 3) {
    pixels[i] = fill[0];
    pixels[i + 1] = fill[1];
    pixels[i + 2] = fill[2];
  }
}

Rgb Raster::at(int x, int y) const {
  const size_t i = (static_cast<size_t>(y) * width + x) * 3;
  return {pixels[i], pixels[i + 1], pixels[i + 2]};
}

void Raster::set(int x, int y, Rgb c) {
  const size_t i = (static_cast<size_t>(y) * width + x) * 3;
  pixels[i] = c[0];
  pixels[i + 1] = c[1];
  pixels[i + 2] = c[2];
}

std::pair<int, int> to_pixel(const Point& p, int width, int height) {
  return {static_cast<int>(std::lround(p.x / kCoordMax * (width - 1))),
          static_cast<int>(std::lround(p.y / kCoordMax * (height - 1)))};
}

namespace {

// 3x5 digit glyphs, one bit per cell, row-major top to bottom.
constexpr uint16_t kDigitGlyphs[10] = {
    0b111101101101111,  // 0
    0b010110010010111,  // 1
    0b111001111100111,  // 2
    0b111001111001111,  // 3
    0b101101111001001,  // 4
    0b111100111001111,  // 5
    0b111100111101111,  // 6
    0b111001001001001,  // 7
    0b111101111101111,  // 8
    0b111101111001111,  // 9
};

void draw_digit(Raster& img, int digit, int x0, int y0, int scale, Rgb color) {
  const uint16_t glyph = kDigitGlyphs[digit];
  for (int row = 0; row < 5; ++row) {
    for (int col = 0; col < 3; ++col) {
      if (!(glyph >> (14 - (row * 3 + col)) & 1)) continue;
      for (int dy = 0; dy < scale; ++dy) {
        for (int dx = 0; dx < scale; ++dx) {
          const int x = x0 + col * scale + dx;
          const int y = y0 + row * scale + dy;
          if (img.in_bounds(x, y)) img.set(x, y, color);
        }
      }
    }
  }
}

void draw_label(Raster& img, int value, int cx, int cy, const MarkerStyle& style) {
  const int scale = 2;
  int x0 = cx + style.radius_px + style.outline_px + 2;
  const int y0 = cy - style.radius_px;
  std::string digits = std::to_string(value);
  for (char c : digits) {
    draw_digit(img, c - '0', x0, y0, scale, style.outline);
    x0 += 4 * scale;
  }
}

}  // namespace

Raster render_markers(const Raster& img, const std::vector<Point>& points,
                      const MarkerStyle& style) {
  style.validate();
  Raster out = img;
  const int r = style.radius_px;
  const int ro = r + style.outline_px;
  for (const Point& p : points) {
    const auto [cx, cy] = to_pixel(p, img.width, img.height);
    for (int y = cy - ro; y <= cy + ro; ++y) {
      for (int x = cx - ro; x <= cx + ro; ++x) {
        if (!out.in_bounds(x, y)) continue;
        const double dist = std::hypot(x - cx, y - cy);
        if (dist <= r) {
          out.set(x, y, style.fill);
        } else if (dist <= ro) {
          out.set(x, y, style.outline);
        }
      }
    }
    if (style.label) draw_label(out, *style.label, cx, cy, style);
  }
  return out;
}

namespace {

bool has_png_signature(const std::vector<uint8_t>& bytes) {
  static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  return bytes.size() >= 8 && std::memcmp(bytes.data(), sig, 8) == 0;
}

bool looks_like_other_image(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 3) return false;
  if (bytes[0] == 0xFF && bytes[1] == 0xD8) return true;                       // JPEG
  if (bytes[0] == 'G' && bytes[1] == 'I' && bytes[2] == 'F') return true;      // GIF
  if (bytes[0] == 'B' && bytes[1] == 'M') return true;                         // BMP
  return false;
}

}  // namespace

std::vector<uint8_t> encode_png(const Raster& img) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;

  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.pixels.data(), 0, nullptr)) {
    throw IoError(IoError::Kind::write_failure, "png size probe failed");
  }
  std::vector<uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.pixels.data(), 0, nullptr)) {
    throw IoError(IoError::Kind::write_failure, "png encode failed");
  }
  out.resize(size);
  return out;
}

Raster decode_png(const std::vector<uint8_t>& bytes) {
  if (!has_png_signature(bytes)) {
    if (looks_like_other_image(bytes)) {
      throw IoError(IoError::Kind::unsupported_format, "not a PNG stream");
    }
    throw IoError(IoError::Kind::corrupt_stream, "stream carries no PNG signature");
  }
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw IoError(IoError::Kind::corrupt_stream, std::string("png decode failed: ") + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  Raster img;
  img.width = static_cast<int>(image.width);
  img.height = static_cast<int>(image.height);
  img.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, img.pixels.data(), 0, nullptr)) {
    throw IoError(IoError::Kind::corrupt_stream, std::string("png decode failed: ") + image.message);
  }
  return img;
}

Raster load_raster(const std::string& path) {
  if (!std::filesystem::exists(path)) {
    throw IoError(IoError::Kind::missing_file, "no such file: " + path);
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoError::Kind::missing_file, "cannot open: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

void save_raster(const Raster& img, const std::string& path) {
  const std::vector<uint8_t> bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(IoError::Kind::write_failure, "cannot write: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

namespace {
constexpr char kB64Chars[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const std::vector<uint8_t>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    const uint32_t v = bytes[i] << 16 | bytes[i + 1] << 8 | bytes[i + 2];
    out += kB64Chars[v >> 18 & 63];
    out += kB64Chars[v >> 12 & 63];
    out += kB64Chars[v >> 6 & 63];
    out += kB64Chars[v & 63];
  }
  const size_t rem = bytes.size() - i;
  if (rem == 1) {
    const uint32_t v = bytes[i] << 16;
    out += kB64Chars[v >> 18 & 63];
    out += kB64Chars[v >> 12 & 63];
    out += "==";
  } else if (rem == 2) {
    const uint32_t v = bytes[i] << 16 | bytes[i + 1] << 8;
    out += kB64Chars[v >> 18 & 63];
    out += kB64Chars[v >> 12 & 63];
    out += kB64Chars[v >> 6 & 63];
    out += '=';
  }
  return out;
}

std::vector<uint8_t> base64_decode(const std::string& text) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<uint8_t> out;
  uint32_t buf = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    const int v = value_of(c);
    if (v < 0) throw InvalidInput("invalid base64 character");
    buf = buf << 6 | static_cast<uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<uint8_t>(buf >> bits & 0xFF));
    }
  }
  return out;
}

std::string to_png_data_uri(const Raster& img) {
  return "data:image/png;base64," + base64_encode(encode_png(img));
}

}  // namespace poivre
