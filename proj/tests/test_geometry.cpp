#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "poivre/canvas.hpp"
#include "poivre/geometry.hpp"

using namespace poivre;

namespace {

PointingTask task_with_references(std::vector<Point> refs) {
  PointingTask task;
  task.id = "t";
  task.image.raster = std::make_shared<Raster>(32, 32);
  task.query = "q";
  for (const Point& r : refs) task.targets.push_back(TargetRegion::disc(r, 1.0));
  return task;
}

// Independent membership oracle: winding-number by angle summation, a
// different algorithm than the ray casting under test.
bool winding_inside(const Point& p, const PolygonRegion& poly) {
  double total = 0.0;
  const size_t n = poly.vertices.size();
  for (size_t i = 0; i < n; ++i) {
    const Point& a = poly.vertices[i];
    const Point& b = poly.vertices[(i + 1) % n];
    const double a1 = std::atan2(a.y - p.y, a.x - p.x);
    const double a2 = std::atan2(b.y - p.y, b.x - p.x);
    double d = a2 - a1;
    while (d > M_PI) d -= 2.0 * M_PI;
    while (d < -M_PI) d += 2.0 * M_PI;
    total += d;
  }
  return std::abs(total) > M_PI;
}

double edge_distance(const Point& p, const PolygonRegion& poly) {
  double best = 1e18;
  const size_t n = poly.vertices.size();
  for (size_t i = 0; i < n; ++i) {
    const Point& a = poly.vertices[i];
    const Point& b = poly.vertices[(i + 1) % n];
    const double len2 = (b.x - a.x) * (b.x - a.x) + (b.y - a.y) * (b.y - a.y);
    double t = len2 > 0 ? ((p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y)) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    best = std::min(best, std::hypot(p.x - (a.x + t * (b.x - a.x)),
                                     p.y - (a.y + t * (b.y - a.y))));
  }
  return best;
}

}  // namespace

TEST_CASE("points clamp to range on construction") {
  CHECK(Point(-5.0, 120.0) == Point(0.0, 100.0));
  CHECK(Point(50.0, 50.0).x == 50.0);
}

TEST_CASE("distance_to_target matches hand-computed values") {
  const PointingTask task = task_with_references({Point(0, 0)});
  CHECK(distance_to_target({Point(0, 0)}, task) == 0.0);
  CHECK(distance_to_target({Point(3, 4)}, task) == doctest::Approx(5.0).epsilon(1e-12));
  // mean of {0, 10} by enumeration
  CHECK(distance_to_target({Point(0, 0), Point(10, 0)}, task) ==
        doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("distance_to_target uses the nearest reference") {
  const PointingTask task = task_with_references({Point(0, 0), Point(10, 10)});
  CHECK(distance_to_target({Point(9, 10)}, task) == doctest::Approx(1.0));
}

TEST_CASE("distance_to_target rejects an empty point set") {
  const PointingTask task = task_with_references({Point(0, 0)});
  CHECK_THROWS_AS(distance_to_target({}, task), InvalidInput);
}

TEST_CASE("distance_to_target is translation-consistent") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> coord(20.0, 60.0);
  std::uniform_real_distribution<double> shift(-10.0, 10.0);
  for (int it = 0; it < 200; ++it) {
    const Point ref(coord(rng), coord(rng));
    const Point p(coord(rng), coord(rng));
    const double dx = shift(rng), dy = shift(rng);
    const double base = distance_to_target({p}, task_with_references({ref}));
    const double shifted = distance_to_target(
        {Point(p.x + dx, p.y + dy)}, task_with_references({Point(ref.x + dx, ref.y + dy)}));
    CHECK(base == doctest::Approx(shifted).epsilon(1e-12));
  }
}

TEST_CASE("disc membership") {
  const TargetRegion disc = TargetRegion::disc(Point(50, 50), 10.0);
  CHECK(point_in_region(Point(50, 50), disc));
  CHECK(point_in_region(Point(60, 50), disc));  // boundary inside
  CHECK_FALSE(point_in_region(Point(60.01, 50), disc));
}

TEST_CASE("polygon membership: unit square by hand") {
  const TargetRegion square = TargetRegion::polygon(
      {Point(40, 40), Point(60, 40), Point(60, 60), Point(40, 60)}, Point(50, 50));
  CHECK(point_in_region(Point(50, 50), square));
  CHECK(point_in_region(Point(40, 50), square));  // boundary counts as inside
  CHECK_FALSE(point_in_region(Point(39.5, 50), square));
  CHECK_FALSE(point_in_region(Point(61, 61), square));
}

TEST_CASE("polygon membership agrees with the winding-number oracle") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> coord(5.0, 95.0);
  std::uniform_real_distribution<double> radius(8.0, 25.0);
  std::uniform_int_distribution<int> nverts(3, 8);
  int checked = 0;
  for (int it = 0; it < 100; ++it) {
    // Star-shaped random polygon around a center: vertices sorted by angle.
    const Point c(coord(rng), coord(rng));
    const int n = nverts(rng);
    std::vector<double> angles;
    for (int i = 0; i < n; ++i) angles.push_back(rng() % 6283 / 1000.0);
    std::sort(angles.begin(), angles.end());
    std::vector<Point> verts;
    for (double a : angles) {
      const double r = radius(rng);
      verts.emplace_back(c.x + r * std::cos(a), c.y + r * std::sin(a));
    }
    PolygonRegion poly{verts};
    const TargetRegion region{poly, c};
    for (int k = 0; k < 50; ++k) {
      const Point p(coord(rng), coord(rng));
      if (edge_distance(p, poly) < 0.2) continue;  // documented edge band
      CHECK(point_in_region(p, region) == winding_inside(p, poly));
      ++checked;
    }
  }
  CHECK(checked > 3000);
}

TEST_CASE("bitmask membership via nearest-cell lookup") {
  std::vector<uint8_t> bits(4 * 4, 0);
  bits[0] = 1;  // cell (0, 0)
  const TargetRegion mask = TargetRegion::bitmask(4, 4, bits, Point(0, 0));
  CHECK(point_in_region(Point(0, 0), mask));
  CHECK(point_in_region(Point(10, 10), mask));   // rounds to cell (0, 0)
  CHECK_FALSE(point_in_region(Point(30, 0), mask));
}

TEST_CASE("region constructors enforce invariants") {
  CHECK_THROWS_AS(TargetRegion::disc(Point(50, 50), 0.0), InvalidInput);
  CHECK_THROWS_AS(TargetRegion::polygon({Point(0, 0), Point(1, 1)}, Point(0, 0)), InvalidInput);
  CHECK_THROWS_AS(TargetRegion::bitmask(2, 2, {0, 0, 0, 0}, Point(0, 0)), InvalidInput);
  // reference point outside the region
  CHECK_THROWS_AS(TargetRegion::disc(Point(50, 50), 2.0, Point(80, 80)), InvalidInput);
}

TEST_CASE("task validation") {
  PointingTask task;
  task.id = "x";
  task.image.raster = std::make_shared<Raster>(8, 8);
  task.targets.push_back(TargetRegion::disc(Point(10, 10), 2.0));
  task.query = "";
  CHECK_THROWS_AS(task.validate(), InvalidInput);
  task.query = "q";
  CHECK_NOTHROW(task.validate());
}
