#include "poivre/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

namespace poivre {

std::string StepStats::to_json() const {
  nlohmann::json j;
  j["iteration"] = iteration;
  j["mean_reward"] = mean_reward;
  j["mean_d1"] = mean_d1;
  j["mean_dT"] = mean_dT;
  j["mean_kl"] = mean_kl;
  j["clip_fraction"] = clip_fraction;
  j["grad_norm"] = grad_norm;
  j["degenerate_groups"] = degenerate_groups;
  return j.dump();
}

std::vector<double> normalize_advantages(const std::vector<double>& rewards) {
  const size_t g = rewards.size();
  if (g < 2) throw InvalidInput("advantage normalization needs a group of >= 2");
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / g;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double std_dev = std::sqrt(var / g);  // population std
  std::vector<double> adv(g, 0.0);
  if (std_dev < 1e-6) return adv;  // degenerate group
  for (size_t i = 0; i < g; ++i) adv[i] = (rewards[i] - mean) / std_dev;
  return adv;
}

double clipped_term(double ratio, double advantage, double eps) {
  if (!(ratio > 0.0)) throw InvalidInput("ratio must be positive");
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return std::min(ratio * advantage, clipped * advantage);
}

double kl_estimate(double logp_theta, double logp_ref) {
  if (!std::isfinite(logp_theta) || !std::isfinite(logp_ref)) {
    throw InvalidInput("kl_estimate: non-finite log-probability");
  }
  const double u = std::exp(logp_ref - logp_theta);
  return u - std::log(u) - 1.0;
}

double grpo_objective(const Eigen::VectorXd& theta, const Eigen::VectorXd& theta_ref,
                      const std::vector<RolloutGroup>& groups, const TrainablePolicy& policy,
                      const GrpoConfig& cfg) {
  cfg.validate();
  double total = 0.0;
  size_t n_rollouts = 0;
  for (const RolloutGroup& group : groups) {
    for (size_t i = 0; i < group.records.size(); ++i) {
      const auto& turns = group.records[i];
      const double adv = group.advantages[i];
      double per_rollout = 0.0;
      for (const TurnRecord& rec : turns) {
        const double lp = policy.turn_logprob(theta, rec);
        const double lp_ref = policy.turn_logprob(theta_ref, rec);
        const double ratio = std::exp(lp - rec.logprob_old);
        per_rollout += clipped_term(ratio, adv, cfg.clip_epsilon) -
                       cfg.kl_beta * kl_estimate(lp, lp_ref);
      }
      total += per_rollout / static_cast<double>(turns.size());
      ++n_rollouts;
    }
  }
  return n_rollouts == 0 ? 0.0 : total / static_cast<double>(n_rollouts);
}

Eigen::VectorXd grpo_objective_grad(const Eigen::VectorXd& theta,
                                    const Eigen::VectorXd& theta_ref,
                                    const std::vector<RolloutGroup>& groups,
                                    const TrainablePolicy& policy, const GrpoConfig& cfg) {
  cfg.validate();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta.size());
  size_t n_rollouts = 0;
  for (const RolloutGroup& group : groups) {
    for (size_t i = 0; i < group.records.size(); ++i) {
      const auto& turns = group.records[i];
      const double adv = group.advantages[i];
      Eigen::VectorXd per_rollout = Eigen::VectorXd::Zero(theta.size());
      for (const TurnRecord& rec : turns) {
        const double lp = policy.turn_logprob(theta, rec);
        const double lp_ref = policy.turn_logprob(theta_ref, rec);
        const Eigen::VectorXd score = policy.turn_logprob_grad(theta, rec);
        const double ratio = std::exp(lp - rec.logprob_old);
        const double clipped = std::clamp(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
        // min(ratio*adv, clipped*adv): the unclipped branch carries the
        // gradient; the clipped branch is constant in theta.
        if (ratio * adv <= clipped * adv) {
          per_rollout += adv * ratio * score;
        }
        const double u = std::exp(lp_ref - lp);
        per_rollout -= cfg.kl_beta * (1.0 - u) * score;
      }
      grad += per_rollout / static_cast<double>(turns.size());
      ++n_rollouts;
    }
  }
  if (n_rollouts > 0) grad /= static_cast<double>(n_rollouts);
  return grad;
}

std::vector<RolloutGroup> sample_groups(const std::vector<PointingTask>& tasks,
                                        TrainablePolicy& policy,
                                        const RewardConfig& reward_cfg, const GrpoConfig& cfg,
                                        const RolloutConfig& rollout_cfg) {
  cfg.validate();
  reward_cfg.validate();
  if (reward_cfg.turns != rollout_cfg.turns) {
    throw InvalidInput("reward_cfg.turns must match rollout_cfg.turns");
  }
  std::vector<RolloutGroup> groups;
  groups.reserve(tasks.size());
  for (const PointingTask& task : tasks) {
    RolloutGroup group;
    group.task_id = task.id;
    for (int i = 0; i < cfg.group_size; ++i) {
      group.trajectories.push_back(run_poivre(policy, task, rollout_cfg));
      group.records.push_back(policy.take_recorded_turns());
      group.rewards.push_back(
          process_reward_telescoped(group.trajectories.back().distances, reward_cfg));
    }
    group.advantages = normalize_advantages(group.rewards);
    groups.push_back(std::move(group));
  }
  return groups;
}

StepStats grpo_step(const std::vector<PointingTask>& tasks, TrainablePolicy& policy,
                    const Eigen::VectorXd& theta_ref, const RewardConfig& reward_cfg,
                    const GrpoConfig& cfg, const RolloutConfig& rollout_cfg,
                    Eigen::VectorXd* velocity) {
  const Eigen::VectorXd theta_old = policy.params();
  const std::vector<RolloutGroup> groups =
      sample_groups(tasks, policy, reward_cfg, cfg, rollout_cfg);

  StepStats stats;
  size_t n = 0, n_turns = 0, n_clipped = 0;
  for (const RolloutGroup& group : groups) {
    bool degenerate = true;
    for (size_t i = 0; i < group.trajectories.size(); ++i) {
      const Trajectory& traj = group.trajectories[i];
      stats.mean_reward += group.rewards[i];
      stats.mean_d1 += traj.distances.front();
      stats.mean_dT += traj.distances.back();
      if (group.advantages[i] != 0.0) degenerate = false;
      for (const TurnRecord& rec : group.records[i]) {
        const double lp_ref = policy.turn_logprob(theta_ref, rec);
        stats.mean_kl += kl_estimate(rec.logprob_old, lp_ref);
        const double ratio = 1.0;  // theta == theta_old at sampling time
        const double clipped = std::clamp(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
        if (ratio * group.advantages[i] > clipped * group.advantages[i]) ++n_clipped;
        ++n_turns;
      }
      ++n;
    }
    if (degenerate) ++stats.degenerate_groups;
  }
  if (n > 0) {
    stats.mean_reward /= n;
    stats.mean_d1 /= n;
    stats.mean_dT /= n;
  }
  if (n_turns > 0) {
    stats.mean_kl /= n_turns;
    stats.clip_fraction = static_cast<double>(n_clipped) / n_turns;
  }

  const Eigen::VectorXd grad = grpo_objective_grad(theta_old, theta_ref, groups, policy, cfg);
  if (!grad.allFinite()) {
    throw std::runtime_error("grpo_step: non-finite gradient, step aborted");
  }
  stats.grad_norm = grad.norm();
  Eigen::VectorXd update = grad;
  if (cfg.momentum > 0.0) {
    if (velocity == nullptr) {
      throw InvalidInput("grpo_step: momentum > 0 requires a velocity buffer");
    }
    if (velocity->size() != grad.size()) *velocity = Eigen::VectorXd::Zero(grad.size());
    *velocity = cfg.momentum * *velocity + grad;
    update = *velocity;
  }
  policy.set_params(theta_old + cfg.learning_rate * update);
  return stats;
}

}  // namespace poivre
