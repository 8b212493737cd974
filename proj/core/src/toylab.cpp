#include "poivre/toylab.hpp"

#include "poivre/rng_util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include <json.hpp>

namespace poivre {

using nlohmann::json;

const std::array<Rgb, kPaletteSize>& palette_colors() {
  static const std::array<Rgb, kPaletteSize> colors{{
      {220, 40, 40},   // red
      {40, 200, 60},   // green
      {50, 90, 230},   // blue
      {235, 220, 60},  // yellow
      {160, 60, 200},  // purple
  }};
  return colors;
}

const std::array<std::string, kPaletteSize>& palette_names() {
  static const std::array<std::string, kPaletteSize> names{
      {"red", "green", "blue", "yellow", "purple"}};
  return names;
}

namespace {

constexpr Rgb kBackground{40, 40, 40};

const std::array<std::string, kShapeKinds>& shape_names() {
  static const std::array<std::string, kShapeKinds> names{{"circle", "square", "triangle"}};
  return names;
}

struct SceneShape {
  ShapeKind kind;
  int color_index;
  Point center;
  double size;     // radius / half-side / circumradius, normalized units
  double angle;    // triangle rotation
};

TargetRegion region_for(const SceneShape& s) {
  switch (s.kind) {
    case ShapeKind::circle:
      return TargetRegion::disc(s.center, s.size);
    case ShapeKind::square: {
      std::vector<Point> v{
          Point(s.center.x - s.size, s.center.y - s.size),
          Point(s.center.x + s.size, s.center.y - s.size),
          Point(s.center.x + s.size, s.center.y + s.size),
          Point(s.center.x - s.size, s.center.y + s.size),
      };
      return TargetRegion::polygon(std::move(v), s.center);
    }
    case ShapeKind::triangle: {
      std::vector<Point> v;
      for (int k = 0; k < 3; ++k) {
        const double a = s.angle + k * 2.0 * M_PI / 3.0;
        v.emplace_back(s.center.x + s.size * std::cos(a), s.center.y + s.size * std::sin(a));
      }
      return TargetRegion::polygon(std::move(v), s.center);
    }
  }
  throw InvalidInput("unknown shape kind");
}

void render_shape(Raster& img, const SceneShape& s) {
  const TargetRegion region = region_for(s);
  const Rgb color = palette_colors()[s.color_index];
  const double extent = s.size + 2.0;
  const auto [x0, y0] = to_pixel(Point(std::max(0.0, s.center.x - extent),
                                       std::max(0.0, s.center.y - extent)),
                                 img.width, img.height);
  const auto [x1, y1] = to_pixel(Point(std::min(kCoordMax, s.center.x + extent),
                                       std::min(kCoordMax, s.center.y + extent)),
                                 img.width, img.height);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const Point p(x * kCoordMax / (img.width - 1), y * kCoordMax / (img.height - 1));
      if (point_in_region(p, region)) img.set(x, y, color);
    }
  }
}

uint64_t fnv1a(const uint8_t* data, size_t n, uint64_t h = 1469598103934665603ull) {
  for (size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 1099511628211ull;
  }
  return h;
}

uint64_t task_noise_seed(const Raster& base, const std::string& query) {
  uint64_t h = fnv1a(base.pixels.data(), base.pixels.size());
  return fnv1a(reinterpret_cast<const uint8_t*>(query.data()), query.size(), h);
}

struct ParsedQuery {
  int color_index = -1;
  int shape_index = -1;
};

ParsedQuery parse_query(const std::string& query) {
  ParsedQuery out;
  for (int i = 0; i < kPaletteSize; ++i) {
    if (query.find(palette_names()[i]) != std::string::npos) out.color_index = i;
  }
  for (int i = 0; i < kShapeKinds; ++i) {
    if (query.find(shape_names()[i]) != std::string::npos) out.shape_index = i;
  }
  if (out.color_index < 0 || out.shape_index < 0) {
    throw InvalidInput("query names no known color/shape: " + query);
  }
  return out;
}

std::optional<Point> color_centroid(const Raster& img, Rgb color) {
  double sx = 0.0, sy = 0.0;
  long count = 0;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (img.at(x, y) == color) {
        sx += x;
        sy += y;
        ++count;
      }
    }
  }
  if (count == 0) return std::nullopt;
  return Point(sx / count * kCoordMax / (img.width - 1),
               sy / count * kCoordMax / (img.height - 1));
}

}  // namespace

PointingTask generate_task(const SceneConfig& cfg, uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(hash_mix(cfg.seed, seed));
  std::uniform_real_distribution<double> pos(18.0, 82.0);
  std::uniform_real_distribution<double> size(6.0, 10.0);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);

  // Distinct colors per scene keep the color scan unambiguous.
  std::vector<int> colors(kPaletteSize);
  for (int i = 0; i < kPaletteSize; ++i) colors[i] = i;
  std::shuffle(colors.begin(), colors.end(), rng);

  const int n = std::min(cfg.shapes_per_scene, kPaletteSize);
  std::vector<SceneShape> shapes;
  while (static_cast<int>(shapes.size()) < n) {
    SceneShape s;
    s.kind = static_cast<ShapeKind>(rng() % kShapeKinds);
    s.color_index = colors[shapes.size()];
    s.center = Point(pos(rng), pos(rng));
    s.size = size(rng);
    s.angle = angle(rng);
    const bool overlaps = std::any_of(shapes.begin(), shapes.end(), [&](const SceneShape& o) {
      return euclidean(s.center, o.center) < s.size + o.size + 6.0;
    });
    if (!overlaps) shapes.push_back(s);
  }

  auto base = std::make_shared<Raster>(cfg.image_px, cfg.image_px, kBackground);
  for (const SceneShape& s : shapes) render_shape(*base, s);

  const SceneShape& target = shapes[rng() % shapes.size()];
  PointingTask task;
  task.id = "toy-" + std::to_string(seed);
  task.image.raster = base;
  task.query = "point to the " + palette_names()[target.color_index] + " " +
               shape_names()[static_cast<int>(target.kind)];
  task.targets.push_back(region_for(target));
  task.validate();
  return task;
}

std::vector<PointingTask> generate_tasks(const SceneConfig& cfg, uint64_t seed_base, int count) {
  std::vector<PointingTask> tasks;
  tasks.reserve(count);
  for (int i = 0; i < count; ++i) tasks.push_back(generate_task(cfg, seed_base + i));
  return tasks;
}

std::optional<Point> detect_latest_marker(const std::vector<Raster>& image_history, Rgb fill) {
  if (image_history.empty()) return std::nullopt;
  const Raster& latest = image_history.back();
  double sx = 0.0, sy = 0.0;
  long count = 0;
  if (image_history.size() >= 2) {
    const Raster& prev = image_history[image_history.size() - 2];
    for (int y = 0; y < latest.height; ++y) {
      for (int x = 0; x < latest.width; ++x) {
        if (latest.at(x, y) == fill && prev.at(x, y) != fill) {
          sx += x;
          sy += y;
          ++count;
        }
      }
    }
  }
  if (count == 0) {
    // Overdrawn or single-image history: fall back to every fill pixel.
    for (int y = 0; y < latest.height; ++y) {
      for (int x = 0; x < latest.width; ++x) {
        if (latest.at(x, y) == fill) {
          sx += x;
          sy += y;
          ++count;
        }
      }
    }
  }
  if (count == 0) return std::nullopt;
  return Point(sx / count * kCoordMax / (latest.width - 1),
               sy / count * kCoordMax / (latest.height - 1));
}

Eigen::VectorXd extract_features(const std::vector<Raster>& image_history,
                                 const std::string& query, int turn, const SceneConfig& cfg,
                                 Rgb marker_fill) {
  if (image_history.empty()) throw InvalidInput("extract_features: empty image history");
  const ParsedQuery parsed = parse_query(query);
  const Raster& base = image_history.front();

  const std::optional<Point> target = color_centroid(base, palette_colors()[parsed.color_index]);
  if (!target) throw InvalidInput("queried color not present in scene");

  const uint64_t noise_seed = task_noise_seed(base, query);
  std::normal_distribution<double> unit(0.0, 1.0);

  // Absolute percept: fixed per task.
  std::mt19937_64 obs_rng(hash_mix(noise_seed, 0));
  const double ex = target->x + cfg.observation_noise * unit(obs_rng);
  const double ey = target->y + cfg.observation_noise * unit(obs_rng);

  Eigen::VectorXd f = Eigen::VectorXd::Zero(kFeatureDim);
  f[parsed.color_index] = kOneHotScale;
  f[kPaletteSize + parsed.shape_index] = kOneHotScale;
  f[kPaletteSize + kShapeKinds] = (ex - 50.0) / 100.0;
  f[kPaletteSize + kShapeKinds + 1] = (ey - 50.0) / 100.0;

  const int mslot = kPaletteSize + kShapeKinds + 2;
  const int gslot = mslot + 2;
  f[mslot] = kMarkerSentinel;
  f[mslot + 1] = kMarkerSentinel;

  const std::optional<Point> marker =
      turn > 1 ? detect_latest_marker(image_history, marker_fill) : std::nullopt;
  if (marker) {
    f[mslot] = (marker->x - 50.0) / 100.0;
    f[mslot + 1] = (marker->y - 50.0) / 100.0;
    // Refined percept: marker plus perceived marker-to-target gap, with a
    // per-task relative error proportional to the gap length. The error
    // direction is fixed per task, so iterating the refinement contracts the
    // gap instead of jittering around it. Stored as an absolute position so
    // the same weights serve every turn.
    std::mt19937_64 gap_rng(hash_mix(noise_seed, 2));
    const double gx = target->x - marker->x;
    const double gy = target->y - marker->y;
    const double len = std::hypot(gx, gy);
    f[gslot] = (marker->x + gx + cfg.gap_noise * len * unit(gap_rng) - 50.0) / 100.0;
    f[gslot + 1] = (marker->y + gy + cfg.gap_noise * len * unit(gap_rng) - 50.0) / 100.0;
  } else {
    // No marker yet: the best percept is the coarse absolute estimate.
    f[gslot] = f[kPaletteSize + kShapeKinds];
    f[gslot + 1] = f[kPaletteSize + kShapeKinds + 1];
  }
  // Marker-present indicator rather than the raw turn index: the regime
  // switch the policy needs is "is my own marker visible", and a saturating
  // feature keeps the linear policy stable when run past its training T.
  f[kFeatureDim - 1] = turn > 1 ? 1.0 : 0.0;
  return f;
}

GaussianPolicy::GaussianPolicy(SceneConfig scene, uint64_t sample_seed)
    : scene_(std::move(scene)), theta_(Eigen::VectorXd::Zero(param_count())), rng_(sample_seed) {
  scene_.validate();
  // W = 0, b = 0 puts the untrained mean at the image center; initial
  // exploration std is wide enough to discover targets.
  theta_[2 * kFeatureDim + 2] = std::log(12.0);
  theta_[2 * kFeatureDim + 3] = std::log(12.0);
}

void GaussianPolicy::reseed(uint64_t seed) {
  rng_.seed(seed);
  rollout_index_ = 0;
  pending_noise_.clear();
  mirror_noise_.clear();
}

Eigen::Vector2d GaussianPolicy::mean(const Eigen::VectorXd& theta,
                                     const Eigen::VectorXd& features) const {
  Eigen::Map<const Eigen::Matrix<double, 2, Eigen::Dynamic, Eigen::RowMajor>> W(
      theta.data(), 2, kFeatureDim);
  const Eigen::Vector2d b(theta[2 * kFeatureDim], theta[2 * kFeatureDim + 1]);
  return Eigen::Vector2d::Constant(50.0) + 100.0 * (W * features + b);
}

Eigen::Vector2d GaussianPolicy::stddev(const Eigen::VectorXd& theta) const {
  return {std::exp(theta[2 * kFeatureDim + 2]), std::exp(theta[2 * kFeatureDim + 3])};
}

PolicyAction GaussianPolicy::act(const std::vector<Raster>& image_history,
                                 const std::string& query, int turn) {
  const Eigen::VectorXd f = extract_features(image_history, query, turn, scene_, marker_fill_);
  if (!f.allFinite()) throw InvalidInput("non-finite features");
  const Eigen::Vector2d mu = mean(theta_, f);
  const Eigen::Vector2d sd = stddev(theta_);

  Eigen::Vector2d a = mu;
  if (!deterministic_) {
    // Antithetic sampling: a new rollout starts at turn 1; odd rollouts
    // replay the previous rollout's noise mirrored, so group pairs cancel
    // score noise in the gradient estimate.
    if (turn <= 1) {
      ++rollout_index_;
      if (antithetic_ && rollout_index_ % 2 == 0) {
        mirror_noise_.swap(pending_noise_);
      } else {
        mirror_noise_.clear();
      }
      pending_noise_.clear();
    }
    Eigen::Vector2d z;
    const size_t turn_idx = pending_noise_.size();
    if (turn_idx < mirror_noise_.size()) {
      z = -mirror_noise_[turn_idx];
    } else {
      std::normal_distribution<double> unit(0.0, 1.0);
      z[0] = unit(rng_);
      z[1] = unit(rng_);
    }
    pending_noise_.push_back(z);
    a[0] += sd[0] * z[0];
    a[1] += sd[1] * z[1];
  }

  TurnRecord rec;
  rec.features = f;
  rec.action = a;
  rec.logprob_old = turn_logprob(theta_, rec);
  recorded_.push_back(rec);

  PolicyAction out;
  out.points.emplace_back(a[0], a[1]);  // Point construction clamps
  out.logprob = rec.logprob_old;
  return out;
}

void GaussianPolicy::set_params(const Eigen::VectorXd& theta) {
  if (theta.size() != param_count()) throw InvalidInput("parameter vector size mismatch");
  theta_ = theta;
  // Keep exploration bounded: exp(s) in [0.5, 50].
  for (int k = 0; k < 2; ++k) {
    double& s = theta_[2 * kFeatureDim + 2 + k];
    s = std::clamp(s, std::log(0.5), std::log(50.0));
  }
}

double GaussianPolicy::turn_logprob(const Eigen::VectorXd& theta, const TurnRecord& rec) const {
  const Eigen::Vector2d mu = mean(theta, rec.features);
  double lp = 0.0;
  for (int k = 0; k < 2; ++k) {
    const double s = theta[2 * kFeatureDim + 2 + k];
    const double var = std::exp(2.0 * s);
    const double diff = rec.action[k] - mu[k];
    lp -= s + 0.5 * std::log(2.0 * M_PI) + diff * diff / (2.0 * var);
  }
  return lp;
}

Eigen::VectorXd GaussianPolicy::turn_logprob_grad(const Eigen::VectorXd& theta,
                                                  const TurnRecord& rec) const {
  const Eigen::Vector2d mu = mean(theta, rec.features);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta.size());
  for (int k = 0; k < 2; ++k) {
    const double s = theta[2 * kFeatureDim + 2 + k];
    const double var = std::exp(2.0 * s);
    const double diff = rec.action[k] - mu[k];
    const double dmu = diff / var;  // d logp / d mu_k
    // mu_k = 50 + 100 * (W.row(k) f + b_k)
    for (int j = 0; j < kFeatureDim; ++j) grad[k * kFeatureDim + j] = dmu * 100.0 * rec.features[j];
    grad[2 * kFeatureDim + k] = dmu * 100.0;
    grad[2 * kFeatureDim + 2 + k] = diff * diff / var - 1.0;
  }
  return grad;
}

std::vector<TurnRecord> GaussianPolicy::take_recorded_turns() {
  std::vector<TurnRecord> out;
  out.swap(recorded_);
  return out;
}

TrainMode train_mode_from_string(const std::string& name) {
  if (name == "process_reward") return TrainMode::process_reward;
  if (name == "outcome_reward") return TrainMode::outcome_reward;
  if (name == "vanilla_single_turn") return TrainMode::vanilla_single_turn;
  throw InvalidInput("unknown train mode: " + name);
}

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::process_reward: return "process_reward";
    case TrainMode::outcome_reward: return "outcome_reward";
    case TrainMode::vanilla_single_turn: return "vanilla_single_turn";
  }
  return "?";
}

TrainResult train(const TrainConfig& cfg, std::ostream* metrics_log) {
  RewardConfig reward = cfg.reward;
  switch (cfg.mode) {
    case TrainMode::process_reward:
      break;
    case TrainMode::outcome_reward:
      reward.gamma = 1.0;  // telescopes to the final-turn outcome reward
      break;
    case TrainMode::vanilla_single_turn:
      reward.turns = 1;
      break;
  }
  reward.validate();
  cfg.grpo.validate();

  RolloutConfig rollout;
  rollout.turns = reward.turns;
  rollout.marker_style = cfg.marker_style;
  rollout.history_mode = HistoryMode::full_history;

  GaussianPolicy policy(cfg.scene, hash_mix(cfg.grpo.seed, 0xFACADE));
  policy.set_marker_fill(cfg.marker_style.fill);
  const Eigen::VectorXd theta_ref = policy.params();

  TrainResult result;
  result.theta_ref = theta_ref;
  Eigen::VectorXd velocity = Eigen::VectorXd::Zero(policy.params().size());
  for (int iter = 0; iter < cfg.grpo.iterations; ++iter) {
    std::vector<PointingTask> tasks;
    tasks.reserve(cfg.grpo.batch_tasks);
    for (int j = 0; j < cfg.grpo.batch_tasks; ++j) {
      tasks.push_back(generate_task(
          cfg.scene, hash_mix(cfg.grpo.seed, 0x7EA51000ull + iter * cfg.grpo.batch_tasks + j)));
    }
    StepStats stats = grpo_step(tasks, policy, theta_ref, reward, cfg.grpo, rollout, &velocity);
    stats.iteration = iter;
    if (metrics_log) (*metrics_log) << stats.to_json() << '\n';
    result.stats.push_back(stats);
  }
  result.theta = policy.params();
  return result;
}

namespace {

json vector_to_json(const Eigen::VectorXd& v) {
  json j = json::array();
  for (int i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[static_cast<int>(i)] = j[i].get<double>();
  return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  json j;
  j["theta"] = vector_to_json(ckpt.theta);
  j["theta_ref"] = vector_to_json(ckpt.theta_ref);
  j["mode"] = to_string(ckpt.config.mode);
  j["scene"] = {{"image_px", ckpt.config.scene.image_px},
                {"shapes_per_scene", ckpt.config.scene.shapes_per_scene},
                {"observation_noise", ckpt.config.scene.observation_noise},
                {"gap_noise", ckpt.config.scene.gap_noise},
                {"seed", ckpt.config.scene.seed}};
  j["reward"] = {{"sigma", ckpt.config.reward.sigma},
                 {"gamma", ckpt.config.reward.gamma},
                 {"turns", ckpt.config.reward.turns}};
  j["grpo"] = {{"group_size", ckpt.config.grpo.group_size},
               {"clip_epsilon", ckpt.config.grpo.clip_epsilon},
               {"kl_beta", ckpt.config.grpo.kl_beta},
               {"learning_rate", ckpt.config.grpo.learning_rate},
               {"iterations", ckpt.config.grpo.iterations},
               {"batch_tasks", ckpt.config.grpo.batch_tasks},
               {"seed", ckpt.config.grpo.seed}};
  j["marker"] = {{"radius_px", ckpt.config.marker_style.radius_px},
                 {"fill", ckpt.config.marker_style.fill},
                 {"outline", ckpt.config.marker_style.outline},
                 {"outline_px", ckpt.config.marker_style.outline_px}};
  std::ofstream out(path);
  if (!out) throw IoError(IoError::Kind::write_failure, "cannot write: " + path);
  out << j.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(IoError::Kind::missing_file, "no such file: " + path);
  json j;
  in >> j;
  Checkpoint ckpt;
  ckpt.theta = vector_from_json(j.at("theta"));
  ckpt.theta_ref = vector_from_json(j.at("theta_ref"));
  ckpt.config.mode = train_mode_from_string(j.at("mode").get<std::string>());
  const json& s = j.at("scene");
  ckpt.config.scene.image_px = s.at("image_px").get<int>();
  ckpt.config.scene.shapes_per_scene = s.at("shapes_per_scene").get<int>();
  ckpt.config.scene.observation_noise = s.at("observation_noise").get<double>();
  ckpt.config.scene.gap_noise = s.at("gap_noise").get<double>();
  ckpt.config.scene.seed = s.at("seed").get<uint64_t>();
  const json& r = j.at("reward");
  ckpt.config.reward.sigma = r.at("sigma").get<double>();
  ckpt.config.reward.gamma = r.at("gamma").get<double>();
  ckpt.config.reward.turns = r.at("turns").get<int>();
  const json& g = j.at("grpo");
  ckpt.config.grpo.group_size = g.at("group_size").get<int>();
  ckpt.config.grpo.clip_epsilon = g.at("clip_epsilon").get<double>();
  ckpt.config.grpo.kl_beta = g.at("kl_beta").get<double>();
  ckpt.config.grpo.learning_rate = g.at("learning_rate").get<double>();
  ckpt.config.grpo.iterations = g.at("iterations").get<int>();
  ckpt.config.grpo.batch_tasks = g.at("batch_tasks").get<int>();
  ckpt.config.grpo.seed = g.at("seed").get<uint64_t>();
  const json& m = j.at("marker");
  ckpt.config.marker_style.radius_px = m.at("radius_px").get<int>();
  ckpt.config.marker_style.fill = m.at("fill").get<Rgb>();
  ckpt.config.marker_style.outline = m.at("outline").get<Rgb>();
  ckpt.config.marker_style.outline_px = m.at("outline_px").get<int>();
  return ckpt;
}

}  // namespace poivre
