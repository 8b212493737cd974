#include "poivre/rollout.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace poivre {

using nlohmann::json;

Trajectory run_poivre(PolicyInterface& policy, const PointingTask& task,
                      const RolloutConfig& cfg) {
  cfg.validate();
  task.validate();

  std::vector<Raster> history;
  history.push_back(task.image.in_memory() ? *task.image.raster : load_raster(task.image.path));

  Trajectory traj;
  traj.task_id = task.id;

  for (int turn = 1; turn <= cfg.turns; ++turn) {
    std::vector<Raster> view;
    if (cfg.history_mode == HistoryMode::full_history) {
      view = history;
    } else {
      view.push_back(history.back());
    }

    PolicyAction action;
    try {
      action = policy.act(view, task.query, turn);
      if (action.points.empty()) throw InvalidInput("policy returned no points");
    } catch (const ParseError& e) {
      if (!cfg.penalize_parse_failure) {
        throw RolloutError(std::string("policy parse failure at turn ") +
                               std::to_string(turn) + ": " + e.what(),
                           traj, turn);
      }
      // Penalized turn: empty point set, maximum possible distance, no marker.
      traj.points.emplace_back();
      traj.distances.push_back(max_distance());
      traj.failed_turns.push_back(turn);
      history.push_back(history.back());
      continue;
    } catch (const std::exception& e) {
      throw RolloutError(std::string("policy failure at turn ") + std::to_string(turn) +
                             ": " + e.what(),
                         traj, turn);
    }

    traj.points.push_back(action.points);
    traj.distances.push_back(distance_to_target(action.points, task));
    if (action.logprob) traj.per_turn_logprob.push_back(*action.logprob);

    MarkerStyle style = cfg.marker_style;
    style.label = turn;
    history.push_back(render_markers(history.back(), action.points, style));
  }
  return traj;
}

namespace {

std::vector<Point> parse_json_points(const std::string& text) {
  // The array may be embedded in surrounding prose; try the whole text
  // first, then the outermost bracketed substring.
  std::vector<std::string> candidates{text};
  const size_t open = text.find('[');
  const size_t close = text.rfind(']');
  if (open != std::string::npos && close != std::string::npos && close > open) {
    candidates.push_back(text.substr(open, close - open + 1));
  }
  for (const std::string& candidate : candidates) {
    json parsed = json::parse(candidate, nullptr, false);
    if (!parsed.is_array() || parsed.empty()) continue;
    std::vector<Point> points;
    bool ok = true;
    for (const json& item : parsed) {
      if (item.is_object() && item.contains("x") && item.contains("y") &&
          item["x"].is_number() && item["y"].is_number()) {
        points.emplace_back(item["x"].get<double>(), item["y"].get<double>());
      } else {
        ok = false;
        break;
      }
    }
    if (ok && !points.empty()) return points;
  }
  return {};
}

std::vector<Point> parse_pair_points(const std::string& text) {
  // Tolerant scan for "(number, number)".
  std::vector<Point> points;
  size_t pos = 0;
  while ((pos = text.find('(', pos)) != std::string::npos) {
    const size_t end = text.find(')', pos);
    if (end == std::string::npos) break;
    const std::string inner = text.substr(pos + 1, end - pos - 1);
    const size_t comma = inner.find(',');
    if (comma != std::string::npos) {
      try {
        size_t used_x = 0, used_y = 0;
        const std::string xs = inner.substr(0, comma);
        const std::string ys = inner.substr(comma + 1);
        const double x = std::stod(xs, &used_x);
        const double y = std::stod(ys, &used_y);
        auto rest_blank = [](const std::string& s, size_t from) {
          for (size_t i = from; i < s.size(); ++i) {
            if (!std::isspace(static_cast<unsigned char>(s[i]))) return false;
          }
          return true;
        };
        if (rest_blank(xs, used_x) && rest_blank(ys, used_y)) {
          points.emplace_back(x, y);
        }
      } catch (const std::exception&) {
        // not a numeric pair; keep scanning
      }
    }
    pos = end + 1;
  }
  return points;
}

}  // namespace

std::vector<Point> parse_points(const std::string& text) {
  std::vector<Point> points = parse_json_points(text);
  if (points.empty()) points = parse_pair_points(text);
  if (points.empty()) throw ParseError("no coordinate pair found in response");
  return points;
}

std::string trajectory_to_json(const Trajectory& traj) {
  json j;
  j["task_id"] = traj.task_id;
  json pts = json::array();
  for (const auto& turn : traj.points) {
    json set = json::array();
    for (const Point& p : turn) set.push_back(json::array({p.x, p.y}));
    pts.push_back(set);
  }
  j["points"] = pts;
  j["distances"] = traj.distances;
  if (!traj.per_turn_logprob.empty()) j["logprobs"] = traj.per_turn_logprob;
  if (!traj.failed_turns.empty()) j["failed_turns"] = traj.failed_turns;
  return j.dump();
}

Trajectory trajectory_from_json(const std::string& line) {
  try {
    const json j = json::parse(line);
    Trajectory traj;
    traj.task_id = j.at("task_id").get<std::string>();
    for (const json& set : j.at("points")) {
      std::vector<Point> turn;
      for (const json& p : set) turn.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
      traj.points.push_back(std::move(turn));
    }
    traj.distances = j.at("distances").get<std::vector<double>>();
    if (j.contains("logprobs")) traj.per_turn_logprob = j["logprobs"].get<std::vector<double>>();
    if (j.contains("failed_turns")) traj.failed_turns = j["failed_turns"].get<std::vector<int>>();
    if (traj.points.size() != traj.distances.size()) {
      throw ParseError("trajectory points/distances length mismatch");
    }
    return traj;
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad trajectory line: ") + e.what());
  }
}

void save_trajectories(const std::vector<Trajectory>& trajs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError(IoError::Kind::write_failure, "cannot write: " + path);
  for (const Trajectory& t : trajs) out << trajectory_to_json(t) << '\n';
}

std::vector<Trajectory> load_trajectories(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(IoError::Kind::missing_file, "no such file: " + path);
  std::vector<Trajectory> trajs;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) trajs.push_back(trajectory_from_json(line));
  }
  return trajs;
}

}  // namespace poivre
