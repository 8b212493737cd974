#include "poivre/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "poivre/canvas.hpp"

namespace poivre {

double max_distance() { return kCoordMax * std::sqrt(2.0); }

Point::Point(double px, double py)
    : x(std::clamp(px, 0.0, kCoordMax)), y(std::clamp(py, 0.0, kCoordMax)) {}

double euclidean(const Point& a, const Point& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

namespace {

bool in_disc(const Point& p, const DiscRegion& d) {
  return euclidean(p, d.center) <= d.radius;
}

bool on_segment(const Point& p, const Point& a, const Point& b) {
  const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
  if (std::abs(cross) > 1e-9 * std::max(1.0, std::hypot(b.x - a.x, b.y - a.y))) return false;
  const double dot = (p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y);
  const double len2 = (b.x - a.x) * (b.x - a.x) + (b.y - a.y) * (b.y - a.y);
  return dot >= -1e-12 && dot <= len2 + 1e-12;
}

bool in_polygon(const Point& p, const PolygonRegion& poly) {
  const auto& v = poly.vertices;
  const size_t n = v.size();
  // Boundary counts as inside.
  for (size_t i = 0; i < n; ++i) {
    if (on_segment(p, v[i], v[(i + 1) % n])) return true;
  }
  // Even-odd ray casting toward +x.
  bool inside = false;
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    const bool straddles = (v[i].y > p.y) != (v[j].y > p.y);
    if (straddles) {
      const double xint = v[j].x + (v[i].x - v[j].x) * (p.y - v[j].y) / (v[i].y - v[j].y);
      if (p.x < xint) inside = !inside;
    }
  }
  return inside;
}

bool in_bitmask(const Point& p, const BitmaskRegion& m) {
  // Nearest cell after scaling normalized coords onto the grid.
  const int cx = std::clamp(
      static_cast<int>(std::lround(p.x / kCoordMax * (m.width - 1))), 0, m.width - 1);
  const int cy = std::clamp(
      static_cast<int>(std::lround(p.y / kCoordMax * (m.height - 1))), 0, m.height - 1);
  return m.bits[static_cast<size_t>(cy) * m.width + cx] != 0;
}

}  // namespace

TargetRegion TargetRegion::disc(Point center, double radius, std::optional<Point> reference) {
  if (radius <= 0.0) throw InvalidInput("disc radius must be > 0");
  TargetRegion r{DiscRegion{center, radius}, reference.value_or(center)};
  if (!point_in_region(r.reference_point, r)) {
    throw InvalidInput("disc reference point must lie inside the region");
  }
  return r;
}

TargetRegion TargetRegion::polygon(std::vector<Point> vertices, Point reference) {
  if (vertices.size() < 3) throw InvalidInput("polygon needs >= 3 vertices");
  TargetRegion r{PolygonRegion{std::move(vertices)}, reference};
  if (!point_in_region(r.reference_point, r)) {
    throw InvalidInput("polygon reference point must lie inside the region");
  }
  return r;
}

TargetRegion TargetRegion::bitmask(int width, int height, std::vector<uint8_t> bits,
                                   Point reference) {
  if (width < 1 || height < 1) throw InvalidInput("bitmask dimensions must be >= 1");
  if (bits.size() != static_cast<size_t>(width) * height) {
    throw InvalidInput("bitmask bit count does not match dimensions");
  }
  if (std::none_of(bits.begin(), bits.end(), [](uint8_t b) { return b != 0; })) {
    throw InvalidInput("bitmask needs >= 1 set bit");
  }
  TargetRegion r{BitmaskRegion{width, height, std::move(bits)}, reference};
  if (!point_in_region(r.reference_point, r)) {
    throw InvalidInput("bitmask reference point must lie inside the region");
  }
  return r;
}

void PointingTask::validate() const {
  if (query.empty()) throw InvalidInput("task query must be non-empty");
  if (targets.empty()) throw InvalidInput("task needs >= 1 target region");
  if (image.in_memory()) {
    if (image.raster->width < 1 || image.raster->height < 1) {
      throw InvalidInput("task image dimensions must be >= 1");
    }
  } else if (image.path.empty()) {
    throw InvalidInput("task image reference is empty");
  }
}

bool Trajectory::turn_failed(int t) const {
  return std::find(failed_turns.begin(), failed_turns.end(), t) != failed_turns.end();
}

double distance_to_target(const std::vector<Point>& points, const PointingTask& task) {
  if (points.empty()) throw InvalidInput("distance_to_target: empty point set");
  task.validate();
  double sum = 0.0;
  for (const Point& p : points) {
    double best = std::numeric_limits<double>::infinity();
    for (const TargetRegion& t : task.targets) {
      best = std::min(best, euclidean(p, t.reference_point));
    }
    sum += best;
  }
  return sum / static_cast<double>(points.size());
}

bool point_in_region(const Point& p, const TargetRegion& region) {
  return std::visit(
      [&p](const auto& shape) -> bool {
        using T = std::decay_t<decltype(shape)>;
        if constexpr (std::is_same_v<T, DiscRegion>) return in_disc(p, shape);
        else if constexpr (std::is_same_v<T, PolygonRegion>) return in_polygon(p, shape);
        else return in_bitmask(p, shape);
      },
      region.shape);
}

}  // namespace poivre
