#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "poivre/geometry.hpp"

namespace poivre {

using Rgb = std::array<uint8_t, 3>;

/// Row-major RGB raster. A plain value type; rendering never mutates inputs.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;  // width * height * 3 bytes

  Raster() = default;
  Raster(int w, int h, Rgb fill = {0, 0, 0});

  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);
  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }

  bool operator==(const Raster&) const = default;
};

/// Marker convention: brown filled disc with a white outline, optionally
/// labelled with the turn index beside the disc.
struct MarkerStyle {
  int radius_px = 8;
  Rgb fill = {139, 69, 19};
  Rgb outline = {255, 255, 255};
  int outline_px = 2;
  std::optional<int> label;  // turn index drawn beside the marker

  void validate() const {
    if (radius_px < 1) throw InvalidInput("marker radius must be >= 1");
    if (outline_px < 0) throw InvalidInput("marker outline width must be >= 0");
  }
};

/// Pixel position of a normalized point on a raster of the given dimensions:
/// round(x / 100 * (W-1)), round(y / 100 * (H-1)).
std::pair<int, int> to_pixel(const Point& p, int width, int height);

/// Returns a new raster with a marker drawn at each point; deterministic and
/// idempotent for identical inputs, input raster untouched.
Raster render_markers(const Raster& img, const std::vector<Point>& points,
                      const MarkerStyle& style);

/// PNG decode/encode. Round-trips the pixel grid exactly.
Raster load_raster(const std::string& path);
void save_raster(const Raster& img, const std::string& path);

/// PNG bytes in memory (used for the chat-protocol image payload).
std::vector<uint8_t> encode_png(const Raster& img);
Raster decode_png(const std::vector<uint8_t>& bytes);

std::string base64_encode(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> base64_decode(const std::string& text);

/// data:image/png;base64,... payload for one raster.
std::string to_png_data_uri(const Raster& img);

}  // namespace poivre
