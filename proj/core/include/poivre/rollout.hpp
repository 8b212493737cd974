#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "poivre/canvas.hpp"
#include "poivre/geometry.hpp"

namespace poivre {

/// One policy step: the predicted point set plus, for trainable policies,
/// the log-probability of the emitted action.
struct PolicyAction {
  std::vector<Point> points;  // >= 1 point
  std::optional<double> logprob;
};

/// Abstraction over the pointing model: the toy Gaussian policy, scripted
/// test policies, and the remote VLM client all implement this.
class PolicyInterface {
 public:
  virtual ~PolicyInterface() = default;

  /// image_history holds I_0..I_{turn-1} (or just the latest image under
  /// latest_only); turn is 1-based.
  virtual PolicyAction act(const std::vector<Raster>& image_history,
                           const std::string& query, int turn) = 0;

  /// Reset the policy's sampling stream; no-op for deterministic policies.
  virtual void reseed(uint64_t /*seed*/) {}
};

enum class HistoryMode { full_history, latest_only };

struct RolloutConfig {
  int turns = 2;
  MarkerStyle marker_style;
  HistoryMode history_mode = HistoryMode::full_history;
  /// When true, a ParseError from the policy does not abort the rollout:
  /// the turn is marked failed and scored at the maximum distance.
  bool penalize_parse_failure = false;

  void validate() const {
    if (turns < 1) throw InvalidInput("rollout turns must be >= 1");
    marker_style.validate();
  }
};

/// Policy failure partway through a rollout; carries the turns completed
/// before the failing one.
class RolloutError : public std::runtime_error {
 public:
  RolloutError(const std::string& what, Trajectory partial, int failed_turn)
      : std::runtime_error(what), partial_(std::move(partial)), failed_turn_(failed_turn) {}
  const Trajectory& partial() const { return partial_; }
  int failed_turn() const { return failed_turn_; }

 private:
  Trajectory partial_;
  int failed_turn_;
};

/// Runs the point-visualize-refine loop for cfg.turns rounds: query the
/// policy, record its points and distance, render the markers (labelled with
/// the turn index) onto the image history. I_0 is never mutated.
Trajectory run_poivre(PolicyInterface& policy, const PointingTask& task,
                      const RolloutConfig& cfg);

/// Extracts predicted points from a model response. Primary grammar: a JSON
/// array of objects with numeric "x"/"y". Fallback: tolerant scan for
/// "(x, y)" numeric pairs. Out-of-range values are clamped, order preserved.
std::vector<Point> parse_points(const std::string& text);

/// JSONL round trip, one trajectory per line.
std::string trajectory_to_json(const Trajectory& traj);
Trajectory trajectory_from_json(const std::string& line);
void save_trajectories(const std::vector<Trajectory>& trajs, const std::string& path);
std::vector<Trajectory> load_trajectories(const std::string& path);

}  // namespace poivre
