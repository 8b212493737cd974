#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "poivre/errors.hpp"

namespace poivre {

/// All coordinates in the toolkit are normalized to [0, kCoordMax] per axis,
/// independent of pixel dimensions.
inline constexpr double kCoordMax = 100.0;

/// Largest possible distance between two in-range points (the diagonal).
double max_distance();

/// A 2-D point in normalized coordinates, clamped to range on construction.
struct Point {
  double x = 0.0;
  double y = 0.0;

  Point() = default;
  Point(double px, double py);

  bool operator==(const Point&) const = default;
};

double euclidean(const Point& a, const Point& b);

struct DiscRegion {
  Point center;
  double radius = 0.0;  // normalized units, > 0
};

struct PolygonRegion {
  std::vector<Point> vertices;  // >= 3, in order
};

struct BitmaskRegion {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> bits;  // row-major, width*height entries, >= 1 set
};

/// Ground-truth target: a region plus a canonical reference point used for
/// distance computation. The reference point must lie inside the region.
struct TargetRegion {
  std::variant<DiscRegion, PolygonRegion, BitmaskRegion> shape;
  Point reference_point;

  static TargetRegion disc(Point center, double radius, std::optional<Point> reference = {});
  static TargetRegion polygon(std::vector<Point> vertices, Point reference);
  static TargetRegion bitmask(int width, int height, std::vector<uint8_t> bits, Point reference);
};

struct Raster;  // canvas.hpp

/// Reference to the task image: a file path, or an in-memory raster.
struct ImageRef {
  std::string path;                      // empty when raster is attached
  std::shared_ptr<const Raster> raster;  // null when path is used

  bool in_memory() const { return raster != nullptr; }
};

struct PointingTask {
  std::string id;
  ImageRef image;
  std::string query;
  std::vector<TargetRegion> targets;  // non-empty

  /// Throws InvalidInput when an invariant is broken.
  void validate() const;
};

/// One multi-turn rollout: per-turn point sets with their distances. A turn
/// may be marked failed (e.g. persistent parse failure) in which case its
/// point set is empty and its distance is the penalty value.
struct Trajectory {
  std::string task_id;
  std::vector<std::vector<Point>> points;  // one set per turn, size >= 1 unless failed
  std::vector<double> distances;           // same length as points
  std::vector<double> per_turn_logprob;    // empty for non-trainable policies
  std::vector<int> failed_turns;           // 1-based indices of penalized turns

  int turns() const { return static_cast<int>(points.size()); }
  bool turn_failed(int t) const;
};

/// Mean over predicted points of the Euclidean distance to the nearest
/// target reference point. Zero iff every point coincides with a reference.
double distance_to_target(const std::vector<Point>& points, const PointingTask& task);

/// Membership test. Disc: Euclidean. Polygon: even-odd ray casting, boundary
/// counts as inside. Bitmask: nearest-cell lookup after scaling to the grid.
bool point_in_region(const Point& p, const TargetRegion& region);

}  // namespace poivre
