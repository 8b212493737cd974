#include "poivre/reward.hpp"

#include <cmath>

namespace poivre {

namespace {

void check_distances(const std::vector<double>& distances, const RewardConfig& cfg) {
  cfg.validate();
  if (static_cast<int>(distances.size()) != cfg.turns) {
    throw InvalidInput("distance sequence length does not match cfg.turns");
  }
  for (double d : distances) {
    if (!(d >= 0.0)) throw InvalidInput("distances must be nonnegative");
  }
}

}  // namespace

double outcome_reward(double d, const RewardConfig& cfg) {
  cfg.validate();
  if (!(d >= 0.0)) throw InvalidInput("distance must be nonnegative");
  return std::exp(-d * d / cfg.sigma);
}

double potential(double d, const RewardConfig& cfg) { return outcome_reward(d, cfg); }

double process_reward_telescoped(const std::vector<double>& distances, const RewardConfig& cfg) {
  check_distances(distances, cfg);
  double r = outcome_reward(distances[0], cfg);
  double discount = 1.0;
  for (int j = 1; j < cfg.turns; ++j) {
    discount *= cfg.gamma;
    r += discount * (outcome_reward(distances[j], cfg) - outcome_reward(distances[j - 1], cfg));
  }
  return r;
}

double process_reward_weighted(const std::vector<double>& distances, const RewardConfig& cfg) {
  check_distances(distances, cfg);
  const int T = cfg.turns;
  double r = std::pow(cfg.gamma, T - 1) * outcome_reward(distances[T - 1], cfg);
  double discount = 1.0;  // gamma^{j-1}
  for (int j = 1; j <= T - 1; ++j) {
    r += discount * (1.0 - cfg.gamma) * outcome_reward(distances[j - 1], cfg);
    discount *= cfg.gamma;
  }
  return r;
}

bool weight_bound_holds(int turns, double gamma) {
  if (turns < 1) throw InvalidInput("turns must be >= 1");
  if (gamma <= 0.0 || gamma >= 1.0) throw InvalidInput("gamma must be in (0, 1)");
  return std::pow(gamma, turns - 1) >= 1.0 - gamma;
}

}  // namespace poivre
