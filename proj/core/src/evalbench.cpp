#include "poivre/evalbench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "poivre/rng_util.hpp"

namespace poivre {

using nlohmann::json;

PointingTask DatasetRecord::to_task() const {
  PointingTask task;
  task.id = id;
  task.image.path = image_path;
  task.query = query;
  task.targets = targets;
  return task;
}

namespace {

Point point_from_json(const json& j) {
  if (j.is_array() && j.size() == 2) return Point(j[0].get<double>(), j[1].get<double>());
  if (j.is_object() && j.contains("x") && j.contains("y")) {
    return Point(j["x"].get<double>(), j["y"].get<double>());
  }
  throw InvalidInput("point must be [x, y] or {\"x\", \"y\"}");
}

Point polygon_reference(const std::vector<Point>& vertices) {
  // Shoelace centroid; if it falls outside (concave polygon), fall back to
  // the inside grid point nearest the centroid.
  double a2 = 0.0, cx = 0.0, cy = 0.0;
  const size_t n = vertices.size();
  for (size_t i = 0; i < n; ++i) {
    const Point& p = vertices[i];
    const Point& q = vertices[(i + 1) % n];
    const double cross = p.x * q.y - q.x * p.y;
    a2 += cross;
    cx += (p.x + q.x) * cross;
    cy += (p.y + q.y) * cross;
  }
  Point centroid(0, 0);
  if (std::abs(a2) > 1e-12) {
    centroid = Point(cx / (3.0 * a2), cy / (3.0 * a2));
  } else {
    double sx = 0, sy = 0;
    for (const Point& p : vertices) { sx += p.x; sy += p.y; }
    centroid = Point(sx / n, sy / n);
  }
  TargetRegion probe{PolygonRegion{vertices}, centroid};
  if (point_in_region(centroid, probe)) return centroid;
  double best = std::numeric_limits<double>::infinity();
  Point best_point = centroid;
  for (int gy = 0; gy <= 200; ++gy) {
    for (int gx = 0; gx <= 200; ++gx) {
      const Point p(gx * 0.5, gy * 0.5);
      if (!point_in_region(p, probe)) continue;
      const double d = euclidean(p, centroid);
      if (d < best) {
        best = d;
        best_point = p;
      }
    }
  }
  return best_point;
}

Point bitmask_reference(const BitmaskRegion& m) {
  double sx = 0, sy = 0;
  long count = 0;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (m.bits[static_cast<size_t>(y) * m.width + x]) {
        sx += x;
        sy += y;
        ++count;
      }
    }
  }
  const Point centroid(sx / count * kCoordMax / std::max(1, m.width - 1),
                       sy / count * kCoordMax / std::max(1, m.height - 1));
  TargetRegion probe{m, centroid};
  if (point_in_region(centroid, probe)) return centroid;
  // Concave mask: nearest set cell instead.
  double best = std::numeric_limits<double>::infinity();
  Point best_point = centroid;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.bits[static_cast<size_t>(y) * m.width + x]) continue;
      const Point p(x * kCoordMax / std::max(1, m.width - 1),
                    y * kCoordMax / std::max(1, m.height - 1));
      const double d = euclidean(p, centroid);
      if (d < best) {
        best = d;
        best_point = p;
      }
    }
  }
  return best_point;
}

BitmaskRegion mask_from_png(const std::string& path) {
  const Raster img = load_raster(path);
  BitmaskRegion m;
  m.width = img.width;
  m.height = img.height;
  m.bits.resize(static_cast<size_t>(img.width) * img.height, 0);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const Rgb c = img.at(x, y);
      if (c[0] > 127 || c[1] > 127 || c[2] > 127) {
        m.bits[static_cast<size_t>(y) * img.width + x] = 1;
      }
    }
  }
  return m;
}

TargetRegion target_from_json(const json& j, const std::string& dataset_dir,
                              std::optional<Point> reference) {
  if (!j.is_object() || !j.contains("kind")) throw InvalidInput("target needs a \"kind\"");
  const std::string kind = j["kind"].get<std::string>();
  if (kind == "disc") {
    const Point center = point_from_json(j.at("center"));
    const double radius = j.at("radius").get<double>();
    return TargetRegion::disc(center, radius, reference);
  }
  if (kind == "polygon") {
    std::vector<Point> vertices;
    for (const json& v : j.at("vertices")) vertices.push_back(point_from_json(v));
    if (vertices.size() < 3) throw InvalidInput("polygon needs >= 3 vertices");
    const Point ref = reference.value_or(polygon_reference(vertices));
    return TargetRegion::polygon(std::move(vertices), ref);
  }
  if (kind == "mask") {
    BitmaskRegion m;
    if (j.contains("path")) {
      std::string mask_path = j["path"].get<std::string>();
      if (!mask_path.empty() && mask_path[0] != '/' && !dataset_dir.empty()) {
        mask_path = dataset_dir + "/" + mask_path;
      }
      m = mask_from_png(mask_path);
    } else {
      m.width = j.at("width").get<int>();
      m.height = j.at("height").get<int>();
      for (const json& b : j.at("bits")) m.bits.push_back(b.get<int>() ? 1 : 0);
    }
    const Point ref = reference.value_or(bitmask_reference(m));
    return TargetRegion::bitmask(m.width, m.height, std::move(m.bits), ref);
  }
  throw InvalidInput("unknown target kind: " + kind);
}

std::string dirname_of(const std::string& path) {
  const size_t slash = path.find_last_of('/');
  return slash == std::string::npos ? std::string() : path.substr(0, slash);
}

}  // namespace

std::vector<DatasetRecord> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(IoError::Kind::missing_file, "no such dataset: " + path);
  const std::string dir = dirname_of(path);

  std::vector<DatasetRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw DatasetError(line_no, "", "invalid JSON");

    auto require_string = [&](const char* field) -> std::string {
      if (!j.contains(field) || !j[field].is_string() || j[field].get<std::string>().empty()) {
        throw DatasetError(line_no, field,
                           std::string("missing or empty field \"") + field + "\" at line " +
                               std::to_string(line_no));
      }
      return j[field].get<std::string>();
    };

    DatasetRecord rec;
    rec.id = require_string("id");
    rec.image_path = require_string("image_path");
    rec.query = require_string("query");
    if (!j.contains("targets") || !j["targets"].is_array() || j["targets"].empty()) {
      throw DatasetError(line_no, "targets",
                         "missing or empty field \"targets\" at line " + std::to_string(line_no));
    }
    std::vector<std::optional<Point>> refs;
    if (j.contains("reference_points") && j["reference_points"].is_array() &&
        j["reference_points"].size() == j["targets"].size()) {
      for (const json& p : j["reference_points"]) refs.emplace_back(point_from_json(p));
    } else {
      refs.resize(j["targets"].size());
    }
    size_t ti = 0;
    for (const json& t : j["targets"]) {
      try {
        rec.targets.push_back(target_from_json(t, dir, refs[ti]));
      } catch (const InvalidInput& e) {
        throw DatasetError(line_no, "targets", std::string(e.what()) + " at line " +
                                                   std::to_string(line_no));
      }
      ++ti;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

namespace {

bool points_hit(const std::vector<Point>& points, const std::vector<TargetRegion>& regions,
                SuccessRule rule) {
  if (points.empty()) return false;
  auto in_any = [&regions](const Point& p) {
    return std::any_of(regions.begin(), regions.end(),
                       [&p](const TargetRegion& r) { return point_in_region(p, r); });
  };
  if (rule == SuccessRule::first_point_in_mask) return in_any(points.front());
  return std::any_of(points.begin(), points.end(), in_any);
}

}  // namespace

double success_rate(const std::vector<Trajectory>& trajectories,
                    const std::vector<PointingTask>& tasks, SuccessRule rule) {
  if (trajectories.size() != tasks.size()) {
    throw InvalidInput("trajectories and tasks differ in count");
  }
  if (tasks.empty()) throw InvalidInput("success_rate over an empty set");
  int hits = 0;
  for (size_t i = 0; i < tasks.size(); ++i) {
    if (trajectories[i].task_id != tasks[i].id) {
      throw InvalidInput("trajectory/task id mismatch: " + trajectories[i].task_id + " vs " +
                         tasks[i].id);
    }
    if (trajectories[i].points.empty()) continue;
    if (points_hit(trajectories[i].points.back(), tasks[i].targets, rule)) ++hits;
  }
  return 100.0 * hits / static_cast<double>(tasks.size());
}

double w2p_score(const std::vector<Point>& points, const std::vector<TargetRegion>& regions) {
  if (points.empty()) throw InvalidInput("w2p_score: empty point set");
  int inside = 0;
  for (const Point& p : points) {
    if (std::any_of(regions.begin(), regions.end(),
                    [&p](const TargetRegion& r) { return point_in_region(p, r); })) {
      ++inside;
    }
  }
  return 100.0 * inside / static_cast<double>(points.size());
}

EvalReport evaluate(PolicyInterface& policy, const std::vector<PointingTask>& tasks, int turns,
                    uint64_t seed, const MarkerStyle& style, HistoryMode history,
                    const std::string& dataset_id, const std::string& policy_id) {
  if (tasks.empty()) throw InvalidInput("evaluate over an empty task set");
  RolloutConfig cfg;
  cfg.turns = turns;
  cfg.marker_style = style;
  cfg.history_mode = history;
  cfg.validate();

  EvalReport report;
  report.dataset_id = dataset_id;
  report.policy_id = policy_id;
  report.turns = turns;
  report.seed = seed;
  report.config_fingerprint =
      "turns=" + std::to_string(turns) + ";seed=" + std::to_string(seed) +
      ";history=" + (history == HistoryMode::full_history ? "full" : "latest") +
      ";policy=" + policy_id;

  std::vector<double> dist_sum(turns, 0.0);
  std::vector<long> dist_count(turns, 0);
  int n_any = 0, n_first = 0;
  double w2p_sum = 0.0;
  for (size_t i = 0; i < tasks.size(); ++i) {
    policy.reseed(hash_mix(seed, i));
    TaskOutcome outcome;
    outcome.task_id = tasks[i].id;
    try {
      const Trajectory traj = run_poivre(policy, tasks[i], cfg);
      outcome.distances = traj.distances;
      const auto& final_points = traj.points.back();
      if (!final_points.empty()) {
        outcome.success_any = points_hit(final_points, tasks[i].targets, SuccessRule::any_point_in_mask);
        outcome.success_first =
            points_hit(final_points, tasks[i].targets, SuccessRule::first_point_in_mask);
        outcome.w2p = w2p_score(final_points, tasks[i].targets);
      }
    } catch (const RolloutError& e) {
      outcome.failed = true;
      outcome.distances = e.partial().distances;
    }
    for (size_t t = 0; t < outcome.distances.size() && t < static_cast<size_t>(turns); ++t) {
      dist_sum[t] += outcome.distances[t];
      ++dist_count[t];
    }
    if (outcome.success_any) ++n_any;
    if (outcome.success_first) ++n_first;
    w2p_sum += outcome.w2p;
    report.outcomes.push_back(std::move(outcome));
  }
  report.success_rate_any = 100.0 * n_any / static_cast<double>(tasks.size());
  report.success_rate_first = 100.0 * n_first / static_cast<double>(tasks.size());
  for (int t = 0; t < turns; ++t) {
    report.mean_distance_per_turn.push_back(
        dist_count[t] ? dist_sum[t] / dist_count[t] : std::nan(""));
  }
  report.mean_w2p = w2p_sum / static_cast<double>(tasks.size());
  return report;
}

std::vector<EvalReport> sweep_T(PolicyInterface& policy, const std::vector<PointingTask>& tasks,
                                const std::vector<int>& t_values, uint64_t seed,
                                const MarkerStyle& style, HistoryMode history,
                                const std::string& dataset_id, const std::string& policy_id) {
  if (t_values.empty()) throw InvalidInput("sweep_T: empty T list");
  for (int t : t_values) {
    if (t < 1) throw InvalidInput("sweep_T: every T must be >= 1");
  }
  std::vector<EvalReport> reports;
  for (int t : t_values) {
    reports.push_back(evaluate(policy, tasks, t, seed, style, history, dataset_id, policy_id));
  }
  return reports;
}

std::string EvalReport::to_json() const {
  json j;
  j["dataset_id"] = dataset_id;
  j["policy_id"] = policy_id;
  j["turns"] = turns;
  j["seed"] = seed;
  j["config_fingerprint"] = config_fingerprint;
  j["success_rate_any"] = success_rate_any;
  j["success_rate_first"] = success_rate_first;
  j["mean_distance_per_turn"] = mean_distance_per_turn;
  j["mean_w2p"] = mean_w2p;
  json outs = json::array();
  for (const TaskOutcome& o : outcomes) {
    json e;
    e["task_id"] = o.task_id;
    e["distances"] = o.distances;
    e["success_any"] = o.success_any;
    e["success_first"] = o.success_first;
    e["w2p"] = o.w2p;
    e["failed"] = o.failed;
    outs.push_back(e);
  }
  j["outcomes"] = outs;
  return j.dump(2);
}

EvalReport report_from_json(const std::string& text) {
  const json j = json::parse(text);
  EvalReport r;
  r.dataset_id = j.at("dataset_id").get<std::string>();
  r.policy_id = j.at("policy_id").get<std::string>();
  r.turns = j.at("turns").get<int>();
  r.seed = j.at("seed").get<uint64_t>();
  r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
  r.success_rate_any = j.at("success_rate_any").get<double>();
  r.success_rate_first = j.at("success_rate_first").get<double>();
  r.mean_distance_per_turn = j.at("mean_distance_per_turn").get<std::vector<double>>();
  r.mean_w2p = j.at("mean_w2p").get<double>();
  for (const json& e : j.at("outcomes")) {
    TaskOutcome o;
    o.task_id = e.at("task_id").get<std::string>();
    o.distances = e.at("distances").get<std::vector<double>>();
    o.success_any = e.at("success_any").get<bool>();
    o.success_first = e.at("success_first").get<bool>();
    o.w2p = e.at("w2p").get<double>();
    o.failed = e.at("failed").get<bool>();
    r.outcomes.push_back(std::move(o));
  }
  return r;
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "task_id,success_any,success_first,w2p,failed";
  for (int t = 1; t <= turns; ++t) out << ",d" << t;
  out << '\n';
  for (const TaskOutcome& o : outcomes) {
    out << o.task_id << ',' << (o.success_any ? 1 : 0) << ',' << (o.success_first ? 1 : 0) << ','
        << o.w2p << ',' << (o.failed ? 1 : 0);
    for (int t = 0; t < turns; ++t) {
      out << ',';
      if (t < static_cast<int>(o.distances.size())) out << o.distances[t];
    }
    out << '\n';
  }
  out << "summary," << success_rate_any << ',' << success_rate_first << ',' << mean_w2p << ',';
  for (int t = 0; t < turns; ++t) out << ',' << mean_distance_per_turn[t];
  out << '\n';
  return out.str();
}

void emit_report(const EvalReport& report, const std::string& path, ReportFormat format) {
  std::ofstream out(path);
  if (!out) throw IoError(IoError::Kind::write_failure, "cannot write: " + path);
  out << (format == ReportFormat::json ? report.to_json() : report.to_csv());
  if (format == ReportFormat::json) out << '\n';
}

}  // namespace poivre
