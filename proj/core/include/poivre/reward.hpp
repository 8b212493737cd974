#pragma once

#include <vector>

#include "poivre/errors.hpp"

namespace poivre {

/// Parameters of the outcome/process rewards: squared-distance scale sigma,
/// discount gamma and the number of turns T.
///
/// gamma = 1 is admitted as the analytic limit in which the process reward
/// collapses to the outcome reward of the final turn; it backs the
/// outcome-only training configuration.
struct RewardConfig {
  double sigma = 10.0;
  double gamma = 0.9;
  int turns = 2;

  void validate() const {
    if (sigma <= 0.0) throw InvalidInput("sigma must be > 0");
    if (gamma <= 0.0 || gamma > 1.0) throw InvalidInput("gamma must be in (0, 1]");
    if (turns < 1) throw InvalidInput("turns must be >= 1");
  }
};

/// exp(-d^2 / sigma): 1 at d = 0, strictly decreasing in d.
double outcome_reward(double d, const RewardConfig& cfg);

/// The shaping potential over distance states; identical to outcome_reward.
double potential(double d, const RewardConfig& cfg);

/// Telescoped form: pointing reward for turn 1 plus discounted
/// potential-difference refinement terms,
///   R_O(d_1) + sum_{j=1}^{T-1} gamma^j (R_O(d_{j+1}) - R_O(d_j)).
double process_reward_telescoped(const std::vector<double>& distances, const RewardConfig& cfg);

/// Weighted-average form of the same quantity,
///   gamma^{T-1} R_O(d_T) + sum_{j=1}^{T-1} gamma^{j-1} (1 - gamma) R_O(d_j).
/// Equal to the telescoped form for every input; the weights sum to 1.
double process_reward_weighted(const std::vector<double>& distances, const RewardConfig& cfg);

/// True iff gamma^{T-1} >= 1 - gamma, i.e. T <= 1 + log(1-gamma)/log(gamma),
/// the condition under which the first- and last-turn weights dominate every
/// interior weight. For gamma = 0.9 this holds up to T = 22.
bool weight_bound_holds(int turns, double gamma);

}  // namespace poivre
