#pragma once

#include <iosfwd>
#include <optional>

#include "poivre/grpo.hpp"

namespace poivre {

enum class ShapeKind { circle, square, triangle };

/// Synthetic scene generator configuration. Scenes hold a few colored
/// shapes on a dark background; exactly one shape matches each query.
struct SceneConfig {
  int image_px = 128;
  int shapes_per_scene = 3;
  /// Std of the absolute target-centroid estimate (normalized units). The
  /// draw is fixed per task: the coarse "where is it" percept that turn 1
  /// has to work from.
  double observation_noise = 15.0;
  /// Relative error of the perceived marker-to-target gap once the model's
  /// own marker is visible. The error direction is drawn once per task and
  /// scales with the true gap length, so repeated refinement contracts.
  double gap_noise = 0.1;
  uint64_t seed = 0;

  void validate() const {
    if (image_px < 16) throw InvalidInput("image_px must be >= 16");
    if (shapes_per_scene < 2) throw InvalidInput("shapes_per_scene must be >= 2");
    if (observation_noise < 0.0 || gap_noise < 0.0) {
      throw InvalidInput("noise parameters must be >= 0");
    }
  }
};

/// Number of palette colors the generator and feature extractor agree on.
constexpr int kPaletteSize = 5;
constexpr int kShapeKinds = 3;
/// color one-hot + shape one-hot + estimate + previous marker + percept +
/// marker-present flag.
constexpr int kFeatureDim = kPaletteSize + kShapeKinds + 2 + 2 + 2 + 1;

/// Sentinel written to the previous-marker slots at turn 1. Zero keeps the
/// untrained policy's output insensitive to the marker weights before any
/// marker exists; the turn-index feature disambiguates "no marker yet".
constexpr double kMarkerSentinel = 0.0;

/// Scale of the one-hot query features. Smaller than the positional scale so
/// gradient steps on the (task-irrelevant) identity slots stay gentle.
constexpr double kOneHotScale = 0.2;

const std::array<Rgb, kPaletteSize>& palette_colors();
const std::array<std::string, kPaletteSize>& palette_names();

/// Deterministic per seed; query is "point to the <color> <shape>", the
/// target region is the matching shape with its centroid as reference.
PointingTask generate_task(const SceneConfig& cfg, uint64_t seed);
std::vector<PointingTask> generate_tasks(const SceneConfig& cfg, uint64_t seed_base, int count);

/// Centroid (normalized) of the most recent marker in the history, found by
/// diffing the last two rasters; nullopt when no marker is visible.
std::optional<Point> detect_latest_marker(const std::vector<Raster>& image_history,
                                          Rgb fill);

/// Engineered observation for the toy policy. Layout:
///   [0,5)   queried-color one-hot
///   [5,8)   queried-shape one-hot
///   [8,10)  noisy absolute centroid estimate, (v-50)/100 per axis
///   [10,12) previous own marker, (v-50)/100, or the sentinel at turn 1
///   [12,14) perceived target position, (v-50)/100: the coarse estimate at
///           turn 1, the marker corrected by the perceived gap afterwards
///   [14]    marker-present indicator (0 at turn 1, 1 afterwards)
/// All percepts are derived from the image pixels and the query text only;
/// noise draws are seeded from a hash of (I_0, query), so extraction is
/// deterministic given (task, markers, turn).
Eigen::VectorXd extract_features(const std::vector<Raster>& image_history,
                                 const std::string& query, int turn, const SceneConfig& cfg,
                                 Rgb marker_fill);

/// Linear-Gaussian pointing policy: mean = 50 + 100 * (W f + b), per-axis
/// std exp(s). Log-probabilities are computed on the pre-clamp sample;
/// gradients are the closed-form Gaussian score chain-ruled into W, b, s.
class GaussianPolicy : public TrainablePolicy {
 public:
  explicit GaussianPolicy(SceneConfig scene, uint64_t sample_seed = 0);

  // PolicyInterface
  PolicyAction act(const std::vector<Raster>& image_history, const std::string& query,
                   int turn) override;
  void reseed(uint64_t seed) override;

  // TrainablePolicy
  Eigen::VectorXd params() const override { return theta_; }
  void set_params(const Eigen::VectorXd& theta) override;
  double turn_logprob(const Eigen::VectorXd& theta, const TurnRecord& rec) const override;
  Eigen::VectorXd turn_logprob_grad(const Eigen::VectorXd& theta,
                                    const TurnRecord& rec) const override;
  std::vector<TurnRecord> take_recorded_turns() override;

  /// Mean action instead of a sample; used for evaluation.
  void set_deterministic(bool on) { deterministic_ = on; }
  bool deterministic() const { return deterministic_; }

  /// Antithetic exploration (on by default): consecutive rollouts draw
  /// mirrored noise, halving the variance of group-relative gradients.
  void set_antithetic(bool on) { antithetic_ = on; }
  bool antithetic() const { return antithetic_; }

  const SceneConfig& scene() const { return scene_; }
  Rgb marker_fill() const { return marker_fill_; }
  void set_marker_fill(Rgb fill) { marker_fill_ = fill; }

  /// Mean and per-axis std under the given parameters.
  Eigen::Vector2d mean(const Eigen::VectorXd& theta, const Eigen::VectorXd& features) const;
  Eigen::Vector2d stddev(const Eigen::VectorXd& theta) const;

  static int param_count() { return 2 * kFeatureDim + 2 + 2; }

 private:
  SceneConfig scene_;
  Rgb marker_fill_{139, 69, 19};
  Eigen::VectorXd theta_;  // W row-major (2 x F), then b (2), then s (2)
  std::mt19937_64 rng_;
  bool deterministic_ = false;
  bool antithetic_ = true;
  uint64_t rollout_index_ = 0;
  std::vector<Eigen::Vector2d> pending_noise_;  // this rollout's z draws
  std::vector<Eigen::Vector2d> mirror_noise_;   // previous rollout's, to negate
  std::vector<TurnRecord> recorded_;
};

enum class TrainMode { process_reward, outcome_reward, vanilla_single_turn };

TrainMode train_mode_from_string(const std::string& name);
std::string to_string(TrainMode mode);

struct TrainConfig {
  TrainMode mode = TrainMode::process_reward;
  SceneConfig scene;
  RewardConfig reward;    // turns/gamma adjusted per mode
  GrpoConfig grpo;
  MarkerStyle marker_style;

  /// Toy-training defaults: heavy-ball momentum with a matching small step
  /// and a larger batch. Tuned so the desk-scale run converges reliably
  /// within the 200-iteration budget.
  TrainConfig() {
    grpo.learning_rate = 0.005;
    grpo.momentum = 0.9;
    grpo.batch_tasks = 64;
  }
};

struct TrainResult {
  Eigen::VectorXd theta;
  Eigen::VectorXd theta_ref;
  std::vector<StepStats> stats;
};

/// Runs the full GRPO loop on freshly generated scenes. process_reward:
/// T-turn rollouts under the discounted process reward. outcome_reward: the
/// same rollouts with gamma = 1 (final-turn outcome only). vanilla_single_turn:
/// T = 1. Per-iteration stats go to metrics_log as JSON lines when given.
TrainResult train(const TrainConfig& cfg, std::ostream* metrics_log = nullptr);

/// Checkpoint round trip: policy parameters, reference parameters, configs.
struct Checkpoint {
  Eigen::VectorXd theta;
  Eigen::VectorXd theta_ref;
  TrainConfig config;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace poivre
